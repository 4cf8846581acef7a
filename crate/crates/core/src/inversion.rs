//! Inversion of a target texture into a style vector `w`, and latent
//! interpolation.

use autodiff::Var;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{default_layers, FeatureExtractor};
use crate::generator::{sample_noise_batch, Generator, LatentCode, StyleVector};
use crate::image_io::crop;
use crate::metrics::{content_loss_var, gram_loss};
use crate::params::{Adam, AdamConfig, ParamSet, Tensor};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionLoss {
    #[default]
    Gram,
    L2,
    Content,
}

impl std::fmt::Display for InversionLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InversionLoss::Gram => "gram",
            InversionLoss::L2 => "l2",
            InversionLoss::Content => "content",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    pub loss_kind: InversionLoss,
    pub layer_set: Vec<String>,
    /// Layer compared by the content loss.
    pub content_layer: String,
    pub learning_rate: f64,
    pub iterations: usize,
    /// Target crops (and renders) per loss evaluation.
    pub crops_per_eval: usize,
    /// Mapped samples averaged for the initial `w`.
    pub init_samples: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            loss_kind: InversionLoss::Gram,
            layer_set: default_layers(),
            content_layer: "relu3_3".into(),
            learning_rate: 0.001,
            iterations: 5000,
            crops_per_eval: 1,
            init_samples: 1000,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 || self.crops_per_eval < 1 || self.init_samples < 1 {
            return Err(Error::Config("iterations, crops_per_eval and init_samples must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.layer_set.is_empty() {
            return Err(Error::Config("layer_set is empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    /// `w` at the lowest loss seen.
    pub w_star: StyleVector,
    pub loss_trace: Vec<f64>,
    /// Running minimum of `loss_trace`.
    pub best_trace: Vec<f64>,
    pub final_loss: f64,
}

/// Source of target crops `[n, 3, S, S]` in `[-1, 1]`.
pub trait CropProvider {
    fn crop_size(&self) -> usize;
    fn sample(&mut self, n: usize, rng: &mut RngStream) -> Result<Tensor>;
}

/// The same image every time.
pub struct FixedTarget(pub Tensor);

impl CropProvider for FixedTarget {
    fn crop_size(&self) -> usize {
        self.0.shape[1]
    }

    fn sample(&mut self, n: usize, _: &mut RngStream) -> Result<Tensor> {
        let mut shape = vec![n];
        shape.extend(&self.0.shape);
        Ok(Tensor::new(&shape, self.0.data.repeat(n)))
    }
}

/// Uniform random crops of a larger `[3, H, W]` image in `[0, 1]`.
pub struct RandomCrops {
    image: Tensor,
    size: usize,
}

impl RandomCrops {
    pub fn new(image: Tensor, size: usize) -> Result<Self> {
        if image.shape.len() != 3 || image.shape[0] != 3 || image.shape[1] < size || image.shape[2] < size {
            return Err(Error::InvalidShape(format!("cannot take {size}px crops from {:?}", image.shape)));
        }
        Ok(RandomCrops { image, size })
    }
}

impl CropProvider for RandomCrops {
    fn crop_size(&self) -> usize {
        self.size
    }

    fn sample(&mut self, n: usize, rng: &mut RngStream) -> Result<Tensor> {
        let s = self.size;
        let mut data = Vec::with_capacity(n * 3 * s * s);
        for _ in 0..n {
            let top = rng.below(self.image.shape[1] - s + 1);
            let left = rng.below(self.image.shape[2] - s + 1);
            data.extend(crop(&self.image, top, left, s).data.iter().map(|v| v * 2.0 - 1.0));
        }
        Ok(Tensor::new(&[n, 3, s, s], data))
    }
}

/// Mean of `samples` mapped standard-normal latents.
pub fn mean_style(gen: &Generator, samples: usize, rng: &mut RngStream) -> StyleVector {
    let d = gen.config().latent_dim;
    let z = Var::constant(rng.normal_vec(samples * d), &[samples, d]);
    let w = gen.map_batch(&gen.params().bind_frozen(), &z).mean_axes(&[0]);
    StyleVector { w: w.to_vec() }
}

/// Loss between renders and target crops, both `[n, 3, S, S]`.
pub fn inversion_loss(
    kind: InversionLoss,
    config: &InversionConfig,
    extractor: &dyn FeatureExtractor,
    render: &Var<f32>,
    target: &Var<f32>,
) -> Result<Var<f32>> {
    match kind {
        InversionLoss::Gram => gram_loss(extractor, render, target, &config.layer_set),
        InversionLoss::L2 => Ok((render - target).square().mean_all()),
        InversionLoss::Content => content_loss_var(extractor, render, target, &config.content_layer),
    }
}

/// Renders `n` copies of style `w` at `resolution` with fresh noise and phases.
fn render(gen: &Generator, w: &Var<f32>, n: usize, resolution: usize, rng: &mut RngStream) -> Result<Var<f32>> {
    let d = gen.config().latent_dim;
    let ws = w.reshape(&[1, d]).broadcast_to(&[n, d]);
    let p = gen.params().bind_frozen();
    let noise = sample_noise_batch(gen.config(), rng, resolution, n)?;
    let phases: Vec<_> = (0..n).map(|_| gen.sample_phases(rng)).collect();
    gen.synthesize(&p, &ws, &noise, &phases, resolution)
}

/// Minimizes the configured loss over `w`, starting from the mean style.
pub fn invert(
    gen: &Generator,
    target: &mut dyn CropProvider,
    extractor: &dyn FeatureExtractor,
    config: &InversionConfig,
    rng: &mut RngStream,
) -> Result<InversionResult> {
    config.validate()?;
    let w0 = mean_style(gen, config.init_samples, rng);
    invert_from(gen, &w0, target, extractor, config, rng)
}

/// As [`invert`], from a given initial `w`.
pub fn invert_from(
    gen: &Generator,
    init: &StyleVector,
    target: &mut dyn CropProvider,
    extractor: &dyn FeatureExtractor,
    config: &InversionConfig,
    rng: &mut RngStream,
) -> Result<InversionResult> {
    config.validate()?;
    let d = gen.config().latent_dim;
    if init.w.len() != d {
        return Err(Error::InvalidLatent(format!("initial w has {} entries, expected {d}", init.w.len())));
    }
    let res = target.crop_size();
    gen.config().scale_for(res)?;
    let mut ps = ParamSet::new();
    let wid = ps.add("w", Tensor::new(&[d], init.w.clone()));
    let mut opt = Adam::new(AdamConfig::standard(config.learning_rate), &ps);
    let n = config.crops_per_eval;
    let mut loss_trace = Vec::with_capacity(config.iterations);
    let mut best_trace = Vec::with_capacity(config.iterations);
    let mut best = (f64::INFINITY, init.w.clone());
    for it in 0..config.iterations {
        let bound = ps.bind();
        let w = bound.get(wid);
        let img = render(gen, w, n, res, rng)?;
        let tgt = target.sample(n, rng)?.to_var();
        let loss = inversion_loss(config.loss_kind, config, extractor, &img, &tgt)?;
        let value = loss.item() as f64;
        if !value.is_finite() {
            return Err(Error::Numerical(format!("{} loss is {value} at iteration {it}", config.loss_kind)));
        }
        if value < best.0 {
            best = (value, ps.get(wid).data.clone());
        }
        loss_trace.push(value);
        best_trace.push(best.0);
        let g = autodiff::grad(&loss, &[w], false);
        opt.step(&mut ps, &g)?;
    }
    Ok(InversionResult {
        w_star: StyleVector { w: best.1 },
        final_loss: *loss_trace.last().expect("at least one iteration"),
        loss_trace,
        best_trace,
    })
}

/// Loss of style `w` against the target, averaged over `repeats` draws.
pub fn evaluate_style(
    gen: &Generator,
    w: &StyleVector,
    target: &mut dyn CropProvider,
    extractor: &dyn FeatureExtractor,
    kind: InversionLoss,
    config: &InversionConfig,
    repeats: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let d = gen.config().latent_dim;
    let wv = Var::constant(w.w.clone(), &[d]);
    let mut total = 0.0;
    for _ in 0..repeats.max(1) {
        let img = render(gen, &wv, config.crops_per_eval, target.crop_size(), rng)?;
        let tgt = target.sample(config.crops_per_eval, rng)?.to_var();
        total += inversion_loss(kind, config, extractor, &img, &tgt)?.item() as f64;
    }
    Ok(total / repeats.max(1) as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentSpace {
    Z,
    #[default]
    W,
}

/// `steps` renders along the straight line between two latents, each with
/// fresh noise and phases.
pub fn interpolate_latent(
    gen: &Generator,
    z_a: &LatentCode,
    z_b: &LatentCode,
    steps: usize,
    space: LatentSpace,
    rng: &mut RngStream,
    out_resolution: usize,
) -> Result<Vec<Tensor>> {
    if steps < 2 {
        return Err(Error::InvalidCount(format!("interpolation needs at least 2 steps, got {steps}")));
    }
    match space {
        LatentSpace::W => {
            let (a, b) = (gen.map_latent(z_a)?, gen.map_latent(z_b)?);
            interpolate_styles(gen, &a, &b, steps, rng, out_resolution)
        }
        LatentSpace::Z => {
            let d = gen.config().latent_dim;
            if z_a.z.len() != d || z_b.z.len() != d {
                return Err(Error::InvalidLatent(format!("latents must have {d} entries")));
            }
            let z: Vec<f32> = lerp_rows(&z_a.z, &z_b.z, steps);
            let p = gen.params().bind_frozen();
            let w = gen.map_batch(&p, &Var::constant(z, &[steps, d]));
            gen.render_styles(&p, &w, rng, out_resolution)
        }
    }
}

/// Interpolation directly between two style vectors.
pub fn interpolate_styles(
    gen: &Generator,
    w_a: &StyleVector,
    w_b: &StyleVector,
    steps: usize,
    rng: &mut RngStream,
    out_resolution: usize,
) -> Result<Vec<Tensor>> {
    if steps < 2 {
        return Err(Error::InvalidCount(format!("interpolation needs at least 2 steps, got {steps}")));
    }
    let d = gen.config().latent_dim;
    if w_a.w.len() != d || w_b.w.len() != d {
        return Err(Error::InvalidLatent(format!("styles must have {d} entries")));
    }
    let w = Var::constant(lerp_rows(&w_a.w, &w_b.w, steps), &[steps, d]);
    gen.render_styles(&gen.params().bind_frozen(), &w, rng, out_resolution)
}

fn lerp_rows(a: &[f32], b: &[f32], steps: usize) -> Vec<f32> {
    (0..steps)
        .flat_map(|i| {
            let t = i as f32 / (steps - 1) as f32;
            let last = i == steps - 1;
            a.iter().zip(b).map(move |(x, y)| if last { *y } else { x + t * (y - x) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{IdentityExtractor, RandomVgg};
    use crate::generator::{sample_noise, GeneratorConfig, TbMode};

    fn gen(mode: TbMode) -> Generator {
        let cfg = GeneratorConfig {
            latent_dim: 8,
            base_resolution: 4,
            train_resolution: 8,
            tb_cutoff_resolution: 8,
            channels: vec![8, 4],
            textons_per_module: 4,
            tb_mode: mode,
            mapping_layers: 2,
            ..GeneratorConfig::default()
        };
        Generator::new(cfg, &mut RngStream::new(3)).unwrap()
    }

    fn short(kind: InversionLoss, iterations: usize) -> InversionConfig {
        InversionConfig {
            loss_kind: kind,
            layer_set: vec!["relu1_2".into(), "relu2_2".into()],
            content_layer: "relu2_2".into(),
            iterations,
            init_samples: 64,
            ..InversionConfig::default()
        }
    }

    #[test]
    fn self_inversion_at_optimum_stays_put() {
        // deterministic generator: the target is reproduced exactly at w0
        let g = gen(TbMode::None);
        let w0 = g.map_latent(&LatentCode::sample(8, &mut RngStream::new(4))).unwrap();
        let noise = sample_noise(g.config(), &mut RngStream::new(5), 8).unwrap();
        let target = g.generate_from_style(&w0, &noise, &[], 8).unwrap();
        let vgg = RandomVgg::new([4, 4, 8, 8], 1);
        let r = invert_from(&g, &w0, &mut FixedTarget(target), &vgg, &short(InversionLoss::Gram, 20), &mut RngStream::new(6)).unwrap();
        assert!(r.loss_trace[0] < 1e-10);
        let drift: f32 = r.w_star.w.iter().zip(&w0.w).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(drift < 0.05, "drift {drift}");
    }

    #[test]
    fn constant_match_gives_zero_gram_loss() {
        // a generator whose output is exactly zero everywhere
        let mut g = gen(TbMode::None);
        for (name, t) in g.params().clone().iter() {
            if name.contains("rgb") {
                *g.params_mut().by_name_mut(name).unwrap() = Tensor::zeros(&t.shape);
            }
        }
        let target = Tensor::zeros(&[3, 8, 8]);
        let r = invert(&g, &mut FixedTarget(target), &IdentityExtractor, &InversionConfig {
            layer_set: vec!["identity".into()],
            ..short(InversionLoss::Gram, 5)
        }, &mut RngStream::new(1))
        .unwrap();
        assert!(r.loss_trace.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn traces_are_consistent() {
        let g = gen(TbMode::MultiScale);
        let target = RandomCrops::new(Tensor::new(&[3, 12, 12], (0..432).map(|i| (i % 7) as f32 / 7.0).collect()), 8).unwrap();
        let mut t = target;
        let vgg = RandomVgg::new([4, 4, 8, 8], 1);
        let r = invert(&g, &mut t, &vgg, &short(InversionLoss::Gram, 30), &mut RngStream::new(2)).unwrap();
        assert_eq!(r.loss_trace.len(), 30);
        assert_eq!(r.final_loss, *r.loss_trace.last().unwrap());
        assert!(r.best_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.loss_trace.iter().all(|l| *l >= 0.0));
    }

    #[test]
    fn inversion_is_deterministic() {
        let g = gen(TbMode::MultiScale);
        let vgg = RandomVgg::new([4, 4, 8, 8], 1);
        let img = Tensor::new(&[3, 8, 8], (0..192).map(|i| ((i * 13) % 17) as f32 / 17.0).collect());
        let run = |kind| invert(&g, &mut FixedTarget(img.clone()), &vgg, &short(kind, 10), &mut RngStream::new(9)).unwrap();
        for kind in [InversionLoss::Gram, InversionLoss::L2, InversionLoss::Content] {
            assert_eq!(run(kind), run(kind));
        }
    }

    #[test]
    fn interpolation_endpoints_and_errors() {
        let g = gen(TbMode::None);
        let za = LatentCode::sample(8, &mut RngStream::new(1));
        let zb = LatentCode::sample(8, &mut RngStream::new(2));
        let frames = interpolate_latent(&g, &za, &zb, 2, LatentSpace::W, &mut RngStream::new(3), 8).unwrap();
        assert_eq!(frames.len(), 2);
        // deterministic generator: endpoints equal direct renders
        let noise = sample_noise(g.config(), &mut RngStream::new(0), 8).unwrap();
        assert_eq!(frames[0], g.generate(&za, &noise, &[], 8).unwrap());
        assert_eq!(frames[1], g.generate(&zb, &noise, &[], 8).unwrap());
        let zf = interpolate_latent(&g, &za, &zb, 2, LatentSpace::Z, &mut RngStream::new(3), 8).unwrap();
        assert_eq!(zf, frames);
        assert!(matches!(interpolate_latent(&g, &za, &zb, 1, LatentSpace::Z, &mut RngStream::new(3), 8), Err(Error::InvalidCount(_))));
        let same = interpolate_latent(&g, &za, &za, 4, LatentSpace::Z, &mut RngStream::new(3), 8).unwrap();
        assert!(same.windows(2).all(|w| w[0] == w[1]));
    }
}
