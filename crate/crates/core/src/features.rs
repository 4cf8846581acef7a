//! Feature extractors for Gram statistics, content loss and FID embeddings.

use autodiff::Var;

use crate::error::{Error, Result};
use crate::params::{Bound, ParamSet, Tensor};
use crate::rng::RngStream;

/// Layer set of the default Gram loss.
pub const DEFAULT_LAYERS: [&str; 4] = ["relu1_2", "relu2_2", "relu3_3", "relu4_3"];

pub fn default_layers() -> Vec<String> {
    DEFAULT_LAYERS.iter().map(|s| s.to_string()).collect()
}

pub trait FeatureExtractor {
    fn layer_names(&self) -> Vec<String>;

    /// Activations `[N, C, H, W]` for each requested layer, in request order,
    /// differentiable with respect to `x` (`[N, 3, H, W]` in `[-1, 1]`).
    fn extract(&self, x: &Var<f32>, layers: &[String]) -> Result<Vec<Var<f32>>>;

    /// One fixed-length vector per image: spatial mean and std of every
    /// channel of every layer.
    fn embed(&self, images: &[Tensor]) -> Result<Vec<Vec<f64>>> {
        let first = images.first().ok_or_else(|| Error::InvalidInput("no images to embed".into()))?;
        let mut shape = vec![images.len()];
        shape.extend(&first.shape);
        let x = Var::constant(images.iter().flat_map(|i| i.data.iter().copied()).collect(), &shape);
        let feats = self.extract(&x, &self.layer_names())?;
        let mut out = vec![Vec::new(); images.len()];
        for f in feats {
            let (c, hw) = (f.shape()[1], f.shape()[2] * f.shape()[3]);
            for (n, row) in out.iter_mut().enumerate() {
                for ch in 0..c {
                    let v = &f.data()[(n * c + ch) * hw..(n * c + ch + 1) * hw];
                    let m = v.iter().map(|&a| a as f64).sum::<f64>() / hw as f64;
                    let s = (v.iter().map(|&a| (a as f64 - m).powi(2)).sum::<f64>() / hw as f64).sqrt();
                    row.extend([m, s]);
                }
            }
        }
        Ok(out)
    }
}

fn check_layers(known: &[String], wanted: &[String]) -> Result<()> {
    match wanted.iter().find(|l| !known.contains(l)) {
        Some(l) => Err(Error::Config(format!("unknown feature layer `{l}`; available: {}", known.join(", ")))),
        None => Ok(()),
    }
}

/// Returns the input itself under the layer name `identity`.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn layer_names(&self) -> Vec<String> {
        vec!["identity".into()]
    }

    fn extract(&self, x: &Var<f32>, layers: &[String]) -> Result<Vec<Var<f32>>> {
        check_layers(&self.layer_names(), layers)?;
        Ok(layers.iter().map(|_| x.clone()).collect())
    }
}

/// A VGG-shaped stack with fixed random weights: blocks of 2, 2, 3 and 3
/// ReLU convolutions separated by 2×2 average pooling.
#[derive(Clone, Debug)]
pub struct RandomVgg {
    params: ParamSet,
    blocks: Vec<Vec<(usize, usize)>>,
    frozen: Bound,
}

impl RandomVgg {
    pub const DEFAULT_WIDTHS: [usize; 4] = [16, 32, 64, 64];
    pub const DEFAULT_SEED: u64 = 0x5EED_F00D;

    pub fn new(widths: [usize; 4], seed: u64) -> Self {
        let mut rng = RngStream::new(seed);
        let mut params = ParamSet::new();
        let mut blocks = Vec::new();
        let mut cin = 3;
        let mut idx = 0;
        for (b, (&w, depth)) in widths.iter().zip([2, 2, 3, 3]).enumerate() {
            let mut block = Vec::new();
            for l in 0..depth {
                let std = (2.0 / (cin * 9) as f64).sqrt() as f32;
                let wt = Tensor::new(&[w, cin, 3, 3], rng.normal_vec(w * cin * 9).into_iter().map(|v| v * std).collect());
                params.add(format!("conv{}_{}", b + 1, l + 1), wt);
                block.push((idx, cin));
                idx += 1;
                cin = w;
            }
            blocks.push(block);
        }
        let frozen = params.bind_frozen();
        RandomVgg { params, blocks, frozen }
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }
}

impl Default for RandomVgg {
    fn default() -> Self {
        RandomVgg::new(Self::DEFAULT_WIDTHS, Self::DEFAULT_SEED)
    }
}

impl FeatureExtractor for RandomVgg {
    fn layer_names(&self) -> Vec<String> {
        default_layers()
    }

    fn extract(&self, x: &Var<f32>, layers: &[String]) -> Result<Vec<Var<f32>>> {
        check_layers(&self.layer_names(), layers)?;
        let names = self.layer_names();
        let deepest = layers.iter().filter_map(|l| names.iter().position(|n| n == l)).max().unwrap_or(0);
        let w = self.frozen.refs();
        let mut h = x.clone();
        let mut taps = Vec::new();
        for (b, block) in self.blocks.iter().enumerate().take(deepest + 1) {
            if b > 0 {
                if h.shape()[2] < 2 || h.shape()[3] < 2 {
                    return Err(Error::InvalidShape(format!("input too small for layer {}", names[b])));
                }
                h = h.avg_pool2();
            }
            for &(i, _) in block {
                h = h.conv2d(w[i], 1).leaky_relu(0.0);
            }
            taps.push(h.clone());
        }
        Ok(layers.iter().map(|l| taps[names.iter().position(|n| n == l).unwrap()].clone()).collect())
    }
}

/// Batched normalized Gram matrices `[N, C, C]` of features `[N, C, H, W]`:
/// `F Fᵀ / (C · H · W)`.
pub fn gram(f: &Var<f32>) -> Var<f32> {
    let s = f.shape();
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    let flat = f.reshape(&[n, c, hw]);
    flat.matmul_t(&flat, false, true).scale(1.0 / (c * hw) as f64)
}
