//! Texture corpus: procedural textures, admission of user images, and the
//! grouped crop sampler used for critic batches.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::{self, crop, luminance};
use crate::params::Tensor;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureKind {
    Grating,
    Checker,
    BlobNoise,
    Brick,
    DotLattice,
}

impl TextureKind {
    pub const ALL: [TextureKind; 5] =
        [TextureKind::Grating, TextureKind::Checker, TextureKind::BlobNoise, TextureKind::Brick, TextureKind::DotLattice];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Side of the square image in pixels.
    pub size: usize,
    /// Repeat length in pixels (blob scale for `BlobNoise`).
    pub period: usize,
    /// Radians; used by gratings.
    pub orientation: f64,
    pub colors: [[f32; 3]; 2],
    /// Randomness in `[0, 1]`: brick shading, dot position, grating phase.
    pub jitter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TextureSource {
    Synthetic { kind: TextureKind, params: SynthParams, seed: u64 },
    File { path: PathBuf },
}

/// Outcome of the admission checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admission {
    pub independent_crops: usize,
    /// Dominant period along (rows, columns); `None` where no repetition was found.
    pub period: [Option<usize>; 2],
    pub luminance_cv: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextureRecord {
    pub id: String,
    pub source: TextureSource,
    pub license: Option<String>,
    /// Set once the record has passed [`admit`].
    pub admission: Option<Admission>,
    /// `[3, H, W]` in `[0, 1]`.
    pub image: Tensor,
}

impl TextureRecord {
    pub fn height(&self) -> usize {
        self.image.shape[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape[2]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRules {
    pub crop_size: usize,
    pub min_texton_reps: usize,
    /// Upper bound on the coefficient of variation of 4×4 tile mean luminance.
    pub max_luminance_cv: f64,
}

impl AdmissionRules {
    pub fn new(crop_size: usize) -> Self {
        AdmissionRules { crop_size, min_texton_reps: 5, max_luminance_cv: 0.25 }
    }
}

/// Normalized autocorrelation of `lum` (`h×w`) at shifts along one axis,
/// over the overlapping region only, for lags `0..=max_lag`.
pub fn axis_autocorrelation(lum: &[f32], h: usize, w: usize, axis: usize, max_lag: usize) -> Vec<f64> {
    let n = (h * w) as f64;
    let mean = lum.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = lum.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let len = if axis == 0 { h } else { w };
    (0..=max_lag.min(len - 1))
        .map(|lag| {
            if var <= 1e-12 {
                return 1.0;
            }
            let (mut acc, mut count) = (0.0, 0usize);
            let (rows, cols) = if axis == 0 { (h - lag, w) } else { (h, w - lag) };
            for y in 0..rows {
                for x in 0..cols {
                    let (y2, x2) = if axis == 0 { (y + lag, x) } else { (y, x + lag) };
                    acc += (lum[y * w + x] as f64 - mean) * (lum[y2 * w + x2] as f64 - mean);
                    count += 1;
                }
            }
            acc / count as f64 / var
        })
        .collect()
}

/// Fundamental period of an autocorrelation curve: the first clear local
/// maximum (preceded by a dip) whose height is within 10% of the best one.
pub fn dominant_period(acf: &[f64]) -> Option<usize> {
    const MIN_PEAK: f64 = 0.25;
    const MIN_DIP: f64 = 0.25;
    let mut peaks = Vec::new();
    let mut running_min = f64::INFINITY;
    for l in 1..acf.len() {
        running_min = running_min.min(acf[l]);
        let right = acf.get(l + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if l >= 2 && acf[l] >= acf[l - 1] && acf[l] >= right && acf[l] > MIN_PEAK && acf[l] - running_min > MIN_DIP {
            peaks.push(l);
        }
    }
    let best = peaks.iter().map(|&l| acf[l]).fold(f64::NEG_INFINITY, f64::max);
    peaks.into_iter().find(|&l| acf[l] >= 0.9 * best)
}

/// Dominant period along rows and columns of a `[3, H, W]` image.
pub fn estimate_period(img: &Tensor, max_lag: usize) -> [Option<usize>; 2] {
    let (h, w) = (img.shape[1], img.shape[2]);
    let lum = luminance(img);
    [0, 1].map(|axis| dominant_period(&axis_autocorrelation(&lum, h, w, axis, max_lag)))
}

fn tile_luminance_cv(img: &Tensor) -> f64 {
    let (h, w) = (img.shape[1], img.shape[2]);
    let lum = luminance(img);
    let mut means = Vec::with_capacity(16);
    for ty in 0..4 {
        for tx in 0..4 {
            let (y0, y1, x0, x1) = (ty * h / 4, (ty + 1) * h / 4, tx * w / 4, (tx + 1) * w / 4);
            let mut s = 0.0;
            for y in y0..y1 {
                s += lum[y * w + x0..y * w + x1].iter().map(|&v| v as f64).sum::<f64>();
            }
            means.push(s / ((y1 - y0) * (x1 - x0)).max(1) as f64);
        }
    }
    let m = means.iter().sum::<f64>() / 16.0;
    let sd = (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 16.0).sqrt();
    sd / m.max(1e-6)
}

/// Runs the admission checks in order: size, repetition, uniformity.
pub fn admit(img: &Tensor, rules: &AdmissionRules) -> Result<Admission> {
    let (h, w) = (img.shape[1], img.shape[2]);
    let c = rules.crop_size;
    let independent_crops = (h / c) * (w / c);
    if independent_crops < 2 {
        return Err(Error::Rejected {
            criterion: 2,
            detail: format!("{h}x{w} image holds {independent_crops} independent {c}x{c} crops, need 2"),
        });
    }
    let period = estimate_period(img, c);
    for (axis, p) in period.iter().enumerate() {
        if let Some(p) = *p {
            let reps = c as f64 / p as f64;
            if reps < rules.min_texton_reps as f64 {
                return Err(Error::Rejected {
                    criterion: 3,
                    detail: format!(
                        "period {p} px along {} gives {reps:.1} repetitions per crop, need {}",
                        ["rows", "columns"][axis],
                        rules.min_texton_reps
                    ),
                });
            }
        }
    }
    let luminance_cv = tile_luminance_cv(img);
    if luminance_cv > rules.max_luminance_cv {
        return Err(Error::Rejected {
            criterion: 1,
            detail: format!("tile luminance CV {luminance_cv:.3} exceeds {}", rules.max_luminance_cv),
        });
    }
    Ok(Admission { independent_crops, period, luminance_cv })
}

pub fn ingest_image(path: &Path, rules: &AdmissionRules, license: Option<String>) -> Result<TextureRecord> {
    let image = image_io::load_rgb(path)?;
    let admission = admit(&image, rules)?;
    let id = path.file_stem().map_or_else(|| "texture".into(), |s| s.to_string_lossy().into_owned());
    Ok(TextureRecord { id, source: TextureSource::File { path: path.to_path_buf() }, license, admission: Some(admission), image })
}

/// Pattern intensity in `[0, 1]` per pixel.
fn pattern(kind: TextureKind, p: &SynthParams, rng: &mut RngStream) -> Vec<f64> {
    let n = p.size;
    let per = p.period.max(2) as f64;
    let mut t = vec![0.0; n * n];
    match kind {
        TextureKind::Grating => {
            let (s, c) = p.orientation.sin_cos();
            let offset = p.jitter * rng.uniform_range(0.0, TAU);
            for y in 0..n {
                for x in 0..n {
                    let u = c * x as f64 + s * y as f64;
                    t[y * n + x] = 0.5 + 0.5 * (TAU * u / per + offset).sin();
                }
            }
        }
        TextureKind::Checker => {
            let half = (p.period / 2).max(1);
            for y in 0..n {
                for x in 0..n {
                    t[y * n + x] = ((y / half + x / half) % 2) as f64;
                }
            }
        }
        TextureKind::Brick => {
            let bp = p.period.max(4);
            let row_h = bp / 2;
            let mortar = (bp / 8).max(1);
            let cols = n.div_ceil(bp) + 1;
            let rows = n.div_ceil(row_h);
            let shade: Vec<f64> = (0..rows * cols).map(|_| 1.0 - p.jitter * 0.4 * rng.uniform()).collect();
            for y in 0..n {
                let row = y / row_h;
                let shift = if row % 2 == 1 { bp / 2 } else { 0 };
                for x in 0..n {
                    let xs = x + shift;
                    let in_mortar = y % row_h < mortar || xs % bp < mortar;
                    t[y * n + x] = if in_mortar { 0.0 } else { shade[row * cols + xs / bp] };
                }
            }
        }
        TextureKind::DotLattice => {
            let cells = n.div_ceil(p.period.max(2));
            let radius = per * 0.3;
            let max_off = p.jitter * per * 0.15;
            let offs: Vec<(f64, f64)> = (0..cells * cells)
                .map(|_| (rng.uniform_range(-max_off, max_off), rng.uniform_range(-max_off, max_off)))
                .collect();
            for y in 0..n {
                for x in 0..n {
                    let (cy, cx) = (y / p.period.max(2), x / p.period.max(2));
                    let (oy, ox) = offs[cy * cells + cx];
                    let dy = y as f64 - ((cy as f64 + 0.5) * per + oy);
                    let dx = x as f64 - ((cx as f64 + 0.5) * per + ox);
                    let d = (dy * dy + dx * dx).sqrt();
                    t[y * n + x] = (1.0 - (d - radius).max(0.0)).clamp(0.0, 1.0);
                }
            }
        }
        TextureKind::BlobNoise => {
            // white noise blurred by a separable box filter of width `period`, applied twice
            let mut v: Vec<f64> = (0..n * n).map(|_| rng.uniform()).collect();
            let r = (p.period / 2).max(1);
            for _ in 0..2 {
                v = box_blur_wrap(&v, n, r, true);
                v = box_blur_wrap(&v, n, r, false);
            }
            let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            t = v.iter().map(|x| (x - lo) / (hi - lo).max(1e-12)).collect();
        }
    }
    t
}

fn box_blur_wrap(v: &[f64], n: usize, r: usize, horizontal: bool) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    let k = (2 * r + 1) as f64;
    for a in 0..n {
        for b in 0..n {
            let mut s = 0.0;
            for d in 0..=2 * r {
                let j = (b + n + d - r) % n;
                s += if horizontal { v[a * n + j] } else { v[j * n + a] };
            }
            if horizontal {
                out[a * n + b] = s / k;
            } else {
                out[b * n + a] = s / k;
            }
        }
    }
    out
}

pub fn synth_image(kind: TextureKind, params: &SynthParams, rng: &mut RngStream) -> Tensor {
    let t = pattern(kind, params, rng);
    let n = params.size;
    let [c0, c1] = params.colors;
    let mut data = vec![0.0f32; 3 * n * n];
    for c in 0..3 {
        for (i, &v) in t.iter().enumerate() {
            data[c * n * n + i] = c0[c] + (c1[c] - c0[c]) * v as f32;
        }
    }
    Tensor::new(&[3, n, n], data)
}

/// A procedural texture; deterministic given the seed of `rng`.
pub fn synth_texture(kind: TextureKind, params: &SynthParams, seed: u64) -> TextureRecord {
    TextureRecord {
        id: format!("{kind:?}-{seed}").to_lowercase(),
        source: TextureSource::Synthetic { kind, params: params.clone(), seed },
        license: Some("generated".into()),
        admission: None,
        image: synth_image(kind, params, &mut RngStream::new(seed)),
    }
}

/// Manifest entry; the image lives in `path` relative to the corpus directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub source: TextureSource,
    pub license: Option<String>,
    pub admission: Option<Admission>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub crop_size: usize,
    pub seed: u64,
    pub textures: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Textures held in memory, immutable once built.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub crop_size: usize,
    pub seed: u64,
    pub records: Vec<TextureRecord>,
}

impl Corpus {
    pub fn new(crop_size: usize, seed: u64, records: Vec<TextureRecord>) -> Result<Self> {
        let mut ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!("duplicate texture id `{}`", w[0])));
        }
        if let Some(r) = records.iter().find(|r| r.height() < crop_size || r.width() < crop_size) {
            return Err(Error::InvalidInput(format!("texture `{}` is smaller than a {crop_size}px crop", r.id)));
        }
        Ok(Corpus { crop_size, seed, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            crop_size: self.crop_size,
            seed: self.seed,
            textures: self
                .records
                .iter()
                .map(|r| ManifestEntry {
                    id: r.id.clone(),
                    path: PathBuf::from(format!("{}.png", r.id)),
                    source: r.source.clone(),
                    license: r.license.clone(),
                    admission: r.admission.clone(),
                })
                .collect(),
        }
    }

    /// Writes one PNG per texture plus the manifest.
    pub fn save(&self, dir: &Path) -> Result<CorpusManifest> {
        fs::create_dir_all(dir)?;
        let manifest = self.manifest();
        for (r, e) in self.records.iter().zip(&manifest.textures) {
            image_io::save_rgb(&dir.join(&e.path), &r.image)?;
        }
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let m: CorpusManifest = serde_json::from_str(&text)?;
        let records = m
            .textures
            .into_iter()
            .map(|e| {
                Ok(TextureRecord {
                    image: image_io::load_rgb(&dir.join(&e.path))?,
                    id: e.id,
                    source: e.source,
                    license: e.license,
                    admission: e.admission,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(m.crop_size, m.seed, records)
    }
}

/// The desk corpus: `count` textures cycling through every kind, periods
/// drawn so that each crop holds at least five repetitions.
pub fn build_synthetic_corpus(count: usize, crop_size: usize, image_size: usize, seed: u64) -> Result<Corpus> {
    if count == 0 {
        return Err(Error::Config("corpus needs at least one texture".into()));
    }
    if image_size < 2 * crop_size {
        return Err(Error::Config(format!("image_size {image_size} holds fewer than two {crop_size}px crops")));
    }
    let mut rng = RngStream::new(seed);
    let rules = AdmissionRules::new(crop_size);
    let max_period = crop_size / 5;
    if max_period < 4 {
        return Err(Error::Config(format!("crop_size {crop_size} is too small for five 4px repetitions")));
    }
    let min_period = (crop_size / 8).clamp(4, max_period);
    let records = (0..count)
        .map(|i| {
            let kind = TextureKind::ALL[i % TextureKind::ALL.len()];
            let mut color = || [rng.uniform() as f32, rng.uniform() as f32, rng.uniform() as f32];
            let (a, b) = (color(), color());
            let params = SynthParams {
                size: image_size,
                period: min_period + rng.below(max_period - min_period + 1),
                orientation: if rng.uniform() < 0.5 { 0.0 } else { std::f64::consts::FRAC_PI_2 },
                colors: [a.map(|v| 0.1 + 0.3 * v), b.map(|v| 0.6 + 0.4 * v)],
                jitter: 0.5,
            };
            let tex_seed = rng.fork(i as u64).below(1 << 30) as u64;
            let mut rec = synth_texture(kind, &params, tex_seed);
            rec.id = format!("tex{i:02}-{}", rec.id);
            rec.admission = Some(admit(&rec.image, &rules)?);
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(crop_size, seed, records)
}

/// Real crops grouped by texture: `textures[k]` owns crops
/// `k * crops_per_texture .. (k + 1) * crops_per_texture` of `data`.
#[derive(Clone, Debug, PartialEq)]
pub struct CropBatch {
    /// `[N, 3, S, S]` in `[-1, 1]`.
    pub data: Tensor,
    pub textures: Vec<usize>,
    pub crops_per_texture: usize,
    /// Top-left corner of every crop.
    pub origins: Vec<(usize, usize)>,
}

impl CropBatch {
    pub fn len(&self) -> usize {
        self.data.shape[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Texture index of crop `i`.
    pub fn group_of(&self, i: usize) -> usize {
        self.textures[i / self.crops_per_texture]
    }

    /// Checks the declared grouping against the data layout.
    pub fn validate(&self) -> Result<()> {
        let n = self.textures.len() * self.crops_per_texture;
        if self.crops_per_texture == 0 || self.textures.is_empty() || self.data.shape[0] != n || self.origins.len() != n {
            return Err(Error::InvalidBatch(format!(
                "{} crops do not form {} groups of {}",
                self.data.shape[0],
                self.textures.len(),
                self.crops_per_texture
            )));
        }
        Ok(())
    }
}

pub fn sample_crops(
    corpus: &Corpus,
    textures_per_batch: usize,
    crops_per_texture: usize,
    rng: &mut RngStream,
) -> Result<CropBatch> {
    if textures_per_batch == 0 || crops_per_texture == 0 {
        return Err(Error::Config("textures_per_batch and crops_per_texture must be positive".into()));
    }
    if corpus.len() < textures_per_batch {
        return Err(Error::Config(format!(
            "batch needs {textures_per_batch} distinct textures, corpus has {}",
            corpus.len()
        )));
    }
    let s = corpus.crop_size;
    let textures = rng.choose_distinct(corpus.len(), textures_per_batch);
    let mut data = Vec::with_capacity(textures_per_batch * crops_per_texture * 3 * s * s);
    let mut origins = Vec::new();
    for &t in &textures {
        let img = &corpus.records[t].image;
        for _ in 0..crops_per_texture {
            let top = rng.below(img.shape[1] - s + 1);
            let left = rng.below(img.shape[2] - s + 1);
            data.extend(crop(img, top, left, s).data.iter().map(|v| v * 2.0 - 1.0));
            origins.push((top, left));
        }
    }
    Ok(CropBatch {
        data: Tensor::new(&[textures_per_batch * crops_per_texture, 3, s, s], data),
        textures,
        crops_per_texture,
        origins,
    })
}

/// Non-overlapping crops on a regular grid, row-major, at most `max` of them,
/// in `[0, 1]`.
pub fn grid_crops(record: &TextureRecord, crop_size: usize, max: usize) -> Vec<Tensor> {
    let (rows, cols) = (record.height() / crop_size, record.width() / crop_size);
    (0..rows * cols)
        .take(max)
        .map(|k| crop(&record.image, (k / cols) * crop_size, (k % cols) * crop_size, crop_size))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(size: usize, period: usize) -> SynthParams {
        SynthParams {
            size,
            period,
            orientation: 0.0,
            colors: [[0.1, 0.2, 0.3], [0.9, 0.8, 0.7]],
            jitter: 0.5,
        }
    }

    fn noise_image(n: usize, seed: u64) -> Tensor {
        let mut rng = RngStream::new(seed);
        Tensor::new(&[3, n, n], (0..3 * n * n).map(|_| rng.uniform() as f32).collect())
    }

    #[test]
    fn uniform_noise_is_admitted() {
        let rules = AdmissionRules::new(16);
        let a = admit(&noise_image(160, 1), &rules).unwrap();
        assert_eq!(a.independent_crops, 100);
    }

    #[test]
    fn small_image_fails_size_gate() {
        let rules = AdmissionRules::new(16);
        let err = admit(&noise_image(20, 2), &rules).unwrap_err();
        assert!(matches!(err, Error::Rejected { criterion: 2, .. }), "{err}");
    }

    #[test]
    fn coarse_grating_fails_repetition_check() {
        // period crop/3: three repetitions per crop, five required
        let crop = 48;
        let img = synth_image(TextureKind::Grating, &SynthParams { jitter: 0.0, ..params(4 * crop, crop / 3) }, &mut RngStream::new(0));
        let err = admit(&img, &AdmissionRules::new(crop)).unwrap_err();
        assert!(matches!(err, Error::Rejected { criterion: 3, .. }), "{err}");
    }

    #[test]
    fn fine_grating_passes() {
        let crop = 48;
        let img = synth_image(TextureKind::Grating, &params(4 * crop, 8), &mut RngStream::new(0));
        let a = admit(&img, &AdmissionRules::new(crop)).unwrap();
        assert_eq!(a.period[1], Some(8));
        assert_eq!(a.period[0], None);
    }

    #[test]
    fn gradient_fails_uniformity() {
        let n = 64;
        let data: Vec<f32> = (0..3).flat_map(|_| (0..n * n).map(move |i| (i / n) as f32 / n as f32)).collect();
        let err = admit(&Tensor::new(&[3, n, n], data), &AdmissionRules::new(16)).unwrap_err();
        assert!(matches!(err, Error::Rejected { criterion: 1, .. }), "{err}");
    }

    #[test]
    fn checker_has_exact_period() {
        let img = synth_image(TextureKind::Checker, &params(64, 8), &mut RngStream::new(0));
        let lum = luminance(&img);
        for y in 0..56 {
            for x in 0..56 {
                assert_eq!(lum[y * 64 + x], lum[(y + 8) * 64 + x]);
                assert_eq!(lum[y * 64 + x], lum[y * 64 + x + 8]);
            }
        }
        assert_eq!(estimate_period(&img, 32), [Some(8), Some(8)]);
    }

    #[test]
    fn synthetic_textures_are_reproducible() {
        for kind in TextureKind::ALL {
            let a = synth_texture(kind, &params(64, 8), 5);
            let b = synth_texture(kind, &params(64, 8), 5);
            assert_eq!(a, b);
        }
        let a = synth_texture(TextureKind::BlobNoise, &params(64, 8), 5);
        let b = synth_texture(TextureKind::BlobNoise, &params(64, 8), 6);
        assert_ne!(a.image, b.image);
    }

    #[test]
    fn brick_period_is_recovered() {
        let p = 12;
        let img = synth_image(TextureKind::Brick, &params(96, p), &mut RngStream::new(4));
        for got in estimate_period(&img, 48) {
            let got = got.expect("brick has a period");
            assert!(got.abs_diff(p) <= 1, "period {got} vs {p}");
        }
    }

    #[test]
    fn periodic_kinds_recover_configured_period() {
        for kind in [TextureKind::Grating, TextureKind::Checker, TextureKind::DotLattice, TextureKind::Brick] {
            for p in [6, 8, 10] {
                let img = synth_image(kind, &params(80, p), &mut RngStream::new(p as u64));
                let got = estimate_period(&img, 40)[1].expect("period along columns");
                assert!(got.abs_diff(p) <= 1, "{kind:?}: {got} vs {p}");
            }
        }
    }

    fn small_corpus(count: usize) -> Corpus {
        build_synthetic_corpus(count, 20, 48, 3).unwrap()
    }

    #[test]
    fn batch_is_grouped() {
        let c = small_corpus(8);
        let b = sample_crops(&c, 8, 2, &mut RngStream::new(1)).unwrap();
        b.validate().unwrap();
        assert_eq!(b.len(), 16);
        let mut t = b.textures.clone();
        t.sort();
        t.dedup();
        assert_eq!(t.len(), 8);
        assert_eq!(b.group_of(3), b.textures[1]);
    }

    #[test]
    fn single_crop_batches_are_flat() {
        let c = small_corpus(4);
        let b = sample_crops(&c, 3, 1, &mut RngStream::new(2)).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!((0..3).map(|i| b.group_of(i)).collect::<Vec<_>>(), b.textures);
    }

    #[test]
    fn sampling_is_reproducible_and_checked() {
        let c = small_corpus(4);
        let a = sample_crops(&c, 2, 2, &mut RngStream::new(3)).unwrap();
        assert_eq!(a, sample_crops(&c, 2, 2, &mut RngStream::new(3)).unwrap());
        assert!(matches!(sample_crops(&c, 5, 2, &mut RngStream::new(3)), Err(Error::Config(_))));
    }

    #[test]
    fn corpus_roundtrips_through_disk() {
        let c = small_corpus(3);
        let dir = tempfile::tempdir().unwrap();
        c.save(dir.path()).unwrap();
        let back = Corpus::load(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in c.records.iter().zip(&back.records) {
            assert_eq!(a.id, b.id);
            assert!(a.image.data.iter().zip(&b.image.data).all(|(x, y)| (x - y).abs() <= 0.5 / 255.0 + 1e-6));
        }
    }

    #[test]
    fn ingest_names_its_texture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gravel.png");
        image_io::save_rgb(&path, &noise_image(64, 9)).unwrap();
        let rec = ingest_image(&path, &AdmissionRules::new(16), Some("cc0".into())).unwrap();
        assert_eq!(rec.id, "gravel");
        assert_eq!(rec.license.as_deref(), Some("cc0"));
    }

    proptest::proptest! {
        #[test]
        fn crops_stay_inside_and_groups_are_exact(seed in 0u64..500, t in 1usize..5, k in 1usize..4) {
            let c = small_corpus(5);
            let b = sample_crops(&c, t, k, &mut RngStream::new(seed)).unwrap();
            proptest::prop_assert_eq!(b.len(), t * k);
            for (i, &(top, left)) in b.origins.iter().enumerate() {
                let img = &c.records[b.group_of(i)].image;
                proptest::prop_assert!(top + 20 <= img.shape[1] && left + 20 <= img.shape[2]);
            }
        }
    }
}
