//! σ-maps, thresholded invariant pixel percentage (TIPP), Gram distance and FID.
//!
//! σ and the TIPP thresholds are in units of `[0, 1]` luminance.

use std::io::Write;
use std::path::Path;

use autodiff::Var;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{grid_crops, Corpus};
use crate::error::{Error, Result};
use crate::features::{gram, FeatureExtractor};
use crate::generator::{Generator, LatentCode};
use crate::image_io::{luminance, to_unit};
use crate::params::Tensor;
use crate::rng::RngStream;

/// Default thresholds `{0.5, 1, 2, 4, 8} / 255`.
pub fn default_thresholds() -> Vec<f64> {
    [0.5, 1.0, 2.0, 4.0, 8.0].iter().map(|t| t / 255.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StdDevMap {
    pub h: usize,
    pub w: usize,
    pub sigma: Vec<f64>,
    pub latent_id: u64,
    pub num_samples: usize,
}

/// Per-pixel population std of luminance over `[3, H, W]` images in `[0, 1]`.
pub fn stddev_map_from_images(images: &[Tensor], latent_id: u64) -> Result<StdDevMap> {
    if images.len() < 2 {
        return Err(Error::InvalidCount(format!("σ-map needs at least 2 samples, got {}", images.len())));
    }
    let (h, w) = (images[0].shape[1], images[0].shape[2]);
    if images.iter().any(|i| i.shape != images[0].shape) {
        return Err(Error::InvalidShape("σ-map samples differ in shape".into()));
    }
    let lums: Vec<Vec<f32>> = images.iter().map(luminance).collect();
    let n = lums.len() as f64;
    let sigma = (0..h * w)
        .map(|i| {
            let mean = lums.iter().map(|l| l[i] as f64).sum::<f64>() / n;
            (lums.iter().map(|l| (l[i] as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    Ok(StdDevMap { h, w, sigma, latent_id, num_samples: images.len() })
}

/// σ over `num_noise_samples` renders at fixed `z`, with noise and phases
/// redrawn for every render.
pub fn stddev_map(
    gen: &Generator,
    z: &LatentCode,
    num_noise_samples: usize,
    rng: &mut RngStream,
    out_resolution: usize,
) -> Result<StdDevMap> {
    if num_noise_samples < 2 {
        return Err(Error::InvalidCount(format!("σ-map needs at least 2 samples, got {num_noise_samples}")));
    }
    let w = gen.map_latent(z)?;
    let d = w.w.len();
    let ws = Var::constant(w.w.repeat(num_noise_samples), &[num_noise_samples, d]);
    let images = gen.render_styles(&gen.params().bind_frozen(), &ws, rng, out_resolution)?;
    let unit: Vec<Tensor> = images.iter().map(to_unit).collect();
    let id = z.z.iter().fold(0u64, |h, v| h.rotate_left(7) ^ v.to_bits() as u64);
    stddev_map_from_images(&unit, id)
}

/// Fraction of pixels with σ ≤ t, averaged over maps.
pub fn tipp(maps: &[StdDevMap], t: f64) -> Result<f64> {
    let first = maps.first().ok_or_else(|| Error::InvalidInput("TIPP of no σ-maps".into()))?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("threshold {t} must be non-negative")));
    }
    if maps.iter().any(|m| (m.h, m.w) != (first.h, first.w)) {
        return Err(Error::InvalidShape("σ-maps differ in shape".into()));
    }
    let per_map = |m: &StdDevMap| m.sigma.iter().filter(|&&s| s <= t).count() as f64 / m.sigma.len() as f64;
    Ok(maps.iter().map(per_map).sum::<f64>() / maps.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TIPPCurve {
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn tipp_curve(maps: &[StdDevMap], thresholds: &[f64]) -> Result<TIPPCurve> {
    let values = thresholds.iter().map(|&t| tipp(maps, t)).collect::<Result<_>>()?;
    Ok(TIPPCurve { thresholds: thresholds.to_vec(), values })
}

/// σ across non-overlapping crops of each texture (up to `crops_per_texture`),
/// TIPP per texture, averaged over textures. Textures yielding fewer than two
/// crops are skipped with a warning.
pub fn tipp_for_dataset(corpus: &Corpus, thresholds: &[f64], crops_per_texture: usize) -> Result<TIPPCurve> {
    let mut maps = Vec::new();
    for (i, rec) in corpus.records.iter().enumerate() {
        let crops = grid_crops(rec, corpus.crop_size, crops_per_texture);
        if crops.len() < 2 {
            log::warn!("texture `{}` yields {} crops; skipped", rec.id, crops.len());
            continue;
        }
        maps.push(stddev_map_from_images(&crops, i as u64)?);
    }
    tipp_curve(&maps, thresholds)
}

/// Mean and 95% confidence half-width over repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci95: f64,
    pub repeats: usize,
}

/// Student-t interval; zero width for a single repeat.
pub fn estimate(values: &[f64]) -> Estimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    if n < 2 {
        return Estimate { mean, ci95: 0.0, repeats: n };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof").inverse_cdf(0.975);
    Estimate { mean, ci95: t * (var / n as f64).sqrt(), repeats: n }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TippSummary {
    pub thresholds: Vec<f64>,
    pub values: Vec<Estimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TippProtocol {
    pub latent_codes: usize,
    pub samples_per_code: usize,
    pub repeats: usize,
    pub thresholds: Vec<f64>,
}

impl Default for TippProtocol {
    fn default() -> Self {
        TippProtocol { latent_codes: 1000, samples_per_code: 20, repeats: 5, thresholds: default_thresholds() }
    }
}

/// Model TIPP: σ-maps for fresh latent codes, TIPP averaged over codes, repeated.
pub fn tipp_for_model(
    gen: &Generator,
    protocol: &TippProtocol,
    rng: &mut RngStream,
    out_resolution: usize,
) -> Result<TippSummary> {
    let d = gen.config().latent_dim;
    let mut runs = Vec::new();
    for _ in 0..protocol.repeats.max(1) {
        let maps = (0..protocol.latent_codes)
            .map(|_| {
                let z = LatentCode::sample(d, rng);
                stddev_map(gen, &z, protocol.samples_per_code, rng, out_resolution)
            })
            .collect::<Result<Vec<_>>>()?;
        runs.push(tipp_curve(&maps, &protocol.thresholds)?.values);
    }
    let values = (0..protocol.thresholds.len()).map(|k| estimate(&runs.iter().map(|r| r[k]).collect::<Vec<_>>())).collect();
    Ok(TippSummary { thresholds: protocol.thresholds.clone(), values })
}

/// `threshold, tipp_mean, tipp_ci` rows.
pub fn write_tipp_csv(path: &Path, summary: &TippSummary) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "threshold,tipp_mean,tipp_ci")?;
    for (t, e) in summary.thresholds.iter().zip(&summary.values) {
        writeln!(f, "{t},{},{}", e.mean, e.ci95)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl FeatureStats {
    /// Sample mean and unbiased covariance of row vectors.
    pub fn from_features(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InvalidCount(format!("feature statistics need at least 2 samples, got {n}")));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidShape("feature vectors differ in length".into()));
        }
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
        let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / (n - 1) as f64;
        Ok(FeatureStats { mean, cov })
    }

    pub fn from_images(extractor: &dyn FeatureExtractor, images: &[Tensor]) -> Result<Self> {
        FeatureStats::from_features(&extractor.embed(images)?)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Square root of a symmetric PSD matrix; eigenvalues down to `-1e-6`
/// (relative to the largest) are clipped to zero.
fn psd_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let sqrt_vals = clipped_sqrt(&eig.eigenvalues, what)?;
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose())
}

fn clipped_sqrt(vals: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let scale = vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-6 * scale;
    vals.iter()
        .map(|&v| {
            if v < -tol {
                Err(Error::Numerical(format!("{what} has eigenvalue {v:.3e} below tolerance")))
            } else {
                Ok(v.max(0.0).sqrt())
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(DVector::from_vec)
}

/// `‖μa − μb‖² + tr(Σa + Σb − 2 (Σa Σb)^½)`, with the trace term taken as
/// `Σ √eig(√Σa Σb √Σa)`.
pub fn fid(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.dim() != b.dim() || a.cov.shape() != b.cov.shape() {
        return Err(Error::InvalidShape(format!("feature dimensions {} and {} differ", a.dim(), b.dim())));
    }
    let diff = (&a.mean - &b.mean).norm_squared();
    let s = psd_sqrt(&a.cov, "first covariance")?;
    let m = &s * &b.cov * &s;
    let m = (&m + m.transpose()) * 0.5;
    let cross = clipped_sqrt(&SymmetricEigen::new(m).eigenvalues, "covariance product")?.sum();
    Ok((diff + a.cov.trace() + b.cov.trace() - 2.0 * cross).max(0.0))
}

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape || a.shape.len() != 3 {
        return Err(Error::InvalidShape(format!("image shapes {:?} and {:?}", a.shape, b.shape)));
    }
    Ok(())
}

fn batch_of(imgs: &[&Tensor]) -> Var<f32> {
    let mut shape = vec![imgs.len()];
    shape.extend(&imgs[0].shape);
    Var::constant(imgs.iter().flat_map(|i| i.data.iter().copied()).collect(), &shape)
}

/// Differentiable Gram loss between batches `[N, 3, H, W]`:
/// `Σ_l Σ (G_l(a) − G_l(b))²`, averaged over the batch.
pub fn gram_loss(extractor: &dyn FeatureExtractor, a: &Var<f32>, b: &Var<f32>, layers: &[String]) -> Result<Var<f32>> {
    let fa = extractor.extract(a, layers)?;
    let fb = extractor.extract(b, layers)?;
    let n = a.shape()[0] as f64;
    let mut total: Option<Var<f32>> = None;
    for (x, y) in fa.iter().zip(&fb) {
        let d = (gram(x) - gram(y)).square().sum_all();
        total = Some(match total {
            Some(t) => t + d,
            None => d,
        });
    }
    Ok(total.ok_or_else(|| Error::Config("empty layer set".into()))?.scale(1.0 / n))
}

pub fn gram_distance(a: &Tensor, b: &Tensor, extractor: &dyn FeatureExtractor, layers: &[String]) -> Result<f64> {
    check_pair(a, b)?;
    Ok(gram_loss(extractor, &batch_of(&[a]), &batch_of(&[b]), layers)?.item() as f64)
}

/// Normalized Gram matrices of one `[3, H, W]` image, one per layer.
pub fn gram_features(img: &Tensor, extractor: &dyn FeatureExtractor, layers: &[String]) -> Result<Vec<Vec<f32>>> {
    Ok(extractor.extract(&batch_of(&[img]), layers)?.iter().map(|f| gram(f).to_vec()).collect())
}

/// For every sample, the Gram distance to its closest reference; averaged.
pub fn best_match_gram_distance(
    samples: &[Tensor],
    references: &[Tensor],
    extractor: &dyn FeatureExtractor,
    layers: &[String],
) -> Result<f64> {
    if samples.is_empty() || references.is_empty() {
        return Err(Error::InvalidInput("best-match distance needs samples and references".into()));
    }
    let refs = references.iter().map(|r| gram_features(r, extractor, layers)).collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for s in samples {
        let g = gram_features(s, extractor, layers)?;
        let dist = |r: &Vec<Vec<f32>>| -> f64 {
            r.iter().zip(&g).map(|(a, b)| a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>()).sum()
        };
        total += refs.iter().map(dist).fold(f64::INFINITY, f64::min);
    }
    Ok(total / samples.len() as f64)
}

/// Mean squared feature difference at one layer.
pub fn content_loss_var(extractor: &dyn FeatureExtractor, a: &Var<f32>, b: &Var<f32>, layer: &str) -> Result<Var<f32>> {
    let l = [layer.to_string()];
    let fa = extractor.extract(a, &l)?.remove(0);
    let fb = extractor.extract(b, &l)?.remove(0);
    Ok((fa - fb).square().mean_all())
}

pub fn content_loss(a: &Tensor, b: &Tensor, extractor: &dyn FeatureExtractor, layer: &str) -> Result<f64> {
    check_pair(a, b)?;
    Ok(content_loss_var(extractor, &batch_of(&[a]), &batch_of(&[b]), layer)?.item() as f64)
}
