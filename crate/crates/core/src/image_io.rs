//! 8-bit image files to and from `[C, H, W]` float tensors.
//!
//! Files hold `[0, 1]` intensities; the generator and critic work in `[-1, 1]`.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::params::Tensor;

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image { path: path.to_path_buf(), source }
}

/// Loads any supported file as RGB `[3, H, W]` in `[0, 1]`.
pub fn load_rgb(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut data = vec![0.0f32; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = px[c] as f32 / 255.0;
        }
    }
    Ok(Tensor::new(&[3, h, w], data))
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `[3, H, W]` in `[0, 1]` as an 8-bit RGB file; format from extension.
pub fn save_rgb(path: &Path, img: &Tensor) -> Result<()> {
    let [c, h, w] = img.shape[..] else {
        return Err(Error::InvalidShape(format!("expected [3, H, W], got {:?}", img.shape)));
    };
    if c != 3 {
        return Err(Error::InvalidShape(format!("expected 3 channels, got {c}")));
    }
    let buf: RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let at = |ch: usize| quantize(img.data[(ch * h + y as usize) * w + x as usize]);
        Rgb([at(0), at(1), at(2)])
    });
    buf.save(path).map_err(|e| image_err(path, e))
}

/// Writes an `H×W` map as 8-bit grayscale, values divided by `scale` first.
pub fn save_gray(path: &Path, values: &[f32], h: usize, w: usize, scale: f32) -> Result<()> {
    if values.len() != h * w {
        return Err(Error::InvalidShape(format!("{} values for a {h}x{w} map", values.len())));
    }
    let buf: GrayImage =
        ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([quantize(values[y as usize * w + x as usize] / scale)]));
    buf.save(path).map_err(|e| image_err(path, e))
}

/// `[-1, 1]` to `[0, 1]`.
pub fn to_unit(img: &Tensor) -> Tensor {
    Tensor { shape: img.shape.clone(), data: img.data.iter().map(|v| (v + 1.0) * 0.5).collect() }
}

/// `[0, 1]` to `[-1, 1]`.
pub fn to_signed(img: &Tensor) -> Tensor {
    Tensor { shape: img.shape.clone(), data: img.data.iter().map(|v| v * 2.0 - 1.0).collect() }
}

/// Rec. 601 luma of a `[3, H, W]` image.
pub fn luminance(img: &Tensor) -> Vec<f32> {
    let n = img.shape[1] * img.shape[2];
    let (r, rest) = img.data.split_at(n);
    let (g, b) = rest.split_at(n);
    (0..n).map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]).collect()
}

/// Tiles equally sized `[3, H, W]` images into a grid with `cols` columns.
pub fn grid(images: &[Tensor], cols: usize) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::InvalidInput("no images to tile".into()))?;
    if images.iter().any(|i| i.shape != first.shape) {
        return Err(Error::InvalidShape("grid images differ in shape".into()));
    }
    let (h, w) = (first.shape[1], first.shape[2]);
    let cols = cols.clamp(1, images.len());
    let rows = images.len().div_ceil(cols);
    let (gh, gw) = (rows * h, cols * w);
    let mut data = vec![0.0; 3 * gh * gw];
    for (k, img) in images.iter().enumerate() {
        let (oy, ox) = ((k / cols) * h, (k % cols) * w);
        for c in 0..3 {
            for y in 0..h {
                let src = &img.data[(c * h + y) * w..(c * h + y + 1) * w];
                let at = (c * gh + oy + y) * gw + ox;
                data[at..at + w].copy_from_slice(src);
            }
        }
    }
    Ok(Tensor::new(&[3, gh, gw], data))
}

/// Crops `[C, H, W]` to the `size×size` window at `(top, left)`.
pub fn crop(img: &Tensor, top: usize, left: usize, size: usize) -> Tensor {
    let (c, h, w) = (img.shape[0], img.shape[1], img.shape[2]);
    assert!(top + size <= h && left + size <= w, "crop outside image");
    let mut data = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        for y in top..top + size {
            let row = (ch * h + y) * w;
            data.extend_from_slice(&img.data[row + left..row + left + size]);
        }
    }
    Tensor::new(&[c, size, size], data)
}
