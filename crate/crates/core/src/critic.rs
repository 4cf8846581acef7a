//! Wasserstein critic and its gradient penalty.

use autodiff::Var;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{lrelu, Conv, Linear};
use crate::params::{Bound, ParamSet, Tensor};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticConfig {
    pub input_resolution: usize,
    pub base_resolution: usize,
    /// Width per stage, lowest resolution first (mirrors the generator).
    pub channels: Vec<usize>,
    /// Std of the Gaussian noise added to every critic input.
    pub input_noise_sigma: f64,
    pub mbstd_group: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig {
            input_resolution: 64,
            base_resolution: 4,
            channels: vec![128, 128, 64, 32, 16],
            input_noise_sigma: 0.01,
            mbstd_group: 4,
        }
    }
}

impl CriticConfig {
    pub fn stages(&self) -> usize {
        (self.input_resolution / self.base_resolution.max(1)).trailing_zeros() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.input_resolution;
        let b = self.base_resolution;
        if b == 0 || r < b || r % b != 0 || !(r / b).is_power_of_two() {
            return Err(Error::Config(format!("critic input_resolution {r} is not base {b} times a power of two")));
        }
        if self.channels.len() != self.stages() || self.channels.contains(&0) {
            return Err(Error::Config(format!(
                "critic needs {} positive channel widths, got {:?}",
                self.stages(),
                self.channels
            )));
        }
        if !(self.input_noise_sigma >= 0.0) {
            return Err(Error::Config("input_noise_sigma must be non-negative".into()));
        }
        if self.mbstd_group == 0 {
            return Err(Error::Config("mbstd_group must be positive".into()));
        }
        Ok(())
    }
}

/// Anything that maps an image batch `[N, 3, R, R]` to scores `[N]`.
pub trait CriticModel {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn input_resolution(&self) -> usize;
    fn input_noise_sigma(&self) -> f64;
    /// Raw network evaluation, without input noise.
    fn forward(&self, p: &Bound, x: &Var<f32>) -> Var<f32>;
}

#[derive(Clone, Debug)]
struct Block {
    conv1: Conv,
    conv2: Conv,
    skip: Conv,
}

#[derive(Clone, Debug)]
pub struct Critic {
    config: CriticConfig,
    params: ParamSet,
    from_rgb: Conv,
    blocks: Vec<Block>,
    final_conv: Conv,
    dense: Linear,
    out: Linear,
}

/// Critic parameters φ with their config.
pub type CriticState = Critic;

impl Critic {
    pub fn new(config: CriticConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let mut ps = ParamSet::new();
        let ch = &config.channels;
        let top = config.stages() - 1;
        let from_rgb = Conv::new(&mut ps, "d.rgb", 3, ch[top], 1, rng);
        let mut blocks = Vec::new();
        for s in (1..=top).rev() {
            let res = config.base_resolution << s;
            blocks.push(Block {
                conv1: Conv::new(&mut ps, &format!("d{res}.conv1"), ch[s], ch[s], 3, rng),
                conv2: Conv::new(&mut ps, &format!("d{res}.conv2"), ch[s], ch[s - 1], 3, rng),
                skip: Conv::new(&mut ps, &format!("d{res}.skip"), ch[s], ch[s - 1], 1, rng),
            });
        }
        let b = config.base_resolution;
        let final_conv = Conv::new(&mut ps, "d.final", ch[0] + 1, ch[0], 3, rng);
        let dense = Linear::new(&mut ps, "d.dense", ch[0] * b * b, ch[0], 1.0, 0.0, rng);
        let out = Linear::new(&mut ps, "d.out", ch[0], 1, 1.0, 0.0, rng);
        Ok(Critic { config, params: ps, from_rgb, blocks, final_conv, dense, out })
    }

    pub fn from_params(config: CriticConfig, params: ParamSet) -> Result<Self> {
        let mut c = Critic::new(config, &mut RngStream::new(0))?;
        c.params.check_structure(&params, "critic parameters")?;
        c.params = params;
        Ok(c)
    }

    pub fn config(&self) -> &CriticConfig {
        &self.config
    }

    fn group_size(&self, n: usize) -> usize {
        (1..=self.config.mbstd_group.min(n)).rev().find(|g| n % g == 0).unwrap_or(1)
    }
}

/// Appends the across-group feature standard deviation as one extra channel.
fn minibatch_std(x: &Var<f32>, g: usize) -> Var<f32> {
    let s = x.shape().to_vec();
    let (n, h, w) = (s[0], s[2], s[3]);
    let m = n / g;
    let xr = x.reshape(&[g, m, s[1] * h * w]);
    let centered = &xr - &xr.mean_keepdim(&[0]);
    let std = centered.square().mean_keepdim(&[0]).add_scalar(1e-8).sqrt().mean_axes(&[2]);
    let feat = std.reshape(&[1, m, 1]).broadcast_to(&[g, m, h * w]).reshape(&[n, 1, h, w]);
    Var::concat(&[x.clone(), feat], 1)
}

impl CriticModel for Critic {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn input_resolution(&self) -> usize {
        self.config.input_resolution
    }

    fn input_noise_sigma(&self) -> f64 {
        self.config.input_noise_sigma
    }

    fn forward(&self, p: &Bound, x: &Var<f32>) -> Var<f32> {
        let n = x.shape()[0];
        let mut h = lrelu(&self.from_rgb.forward(p, x));
        for b in &self.blocks {
            let skip = b.skip.forward(p, &h.avg_pool2());
            let main = lrelu(&b.conv2.forward(p, &lrelu(&b.conv1.forward(p, &h)))).avg_pool2();
            h = (main + skip).scale(std::f64::consts::FRAC_1_SQRT_2);
        }
        let h = lrelu(&self.final_conv.forward(p, &minibatch_std(&h, self.group_size(n))));
        let h = lrelu(&self.dense.forward(p, &h.flatten_from(1)));
        self.out.forward(p, &h).reshape(&[n])
    }
}

fn check_batch<C: CriticModel + ?Sized>(critic: &C, x: &Var<f32>) -> Result<()> {
    let r = critic.input_resolution();
    let s = x.shape();
    if s.len() != 4 || s[1] != 3 || s[2] != r || s[3] != r {
        return Err(Error::InvalidShape(format!("critic expects [N, 3, {r}, {r}], got {s:?}")));
    }
    if s[0] == 0 {
        return Err(Error::InvalidBatch("empty batch".into()));
    }
    Ok(())
}

fn with_input_noise(x: &Var<f32>, sigma: f64, rng: &mut RngStream) -> Var<f32> {
    if sigma == 0.0 {
        return x.clone();
    }
    let noise = rng.normal_vec(x.numel()).into_iter().map(|v| v * sigma as f32).collect();
    x + &Var::constant(noise, x.shape())
}

/// Scores `[N]` of a batch, with input noise drawn from `rng`.
pub fn scores<C: CriticModel + ?Sized>(critic: &C, p: &Bound, x: &Var<f32>, rng: &mut RngStream) -> Result<Var<f32>> {
    check_batch(critic, x)?;
    Ok(critic.forward(p, &with_input_noise(x, critic.input_noise_sigma(), rng)))
}

pub fn critic_score<C: CriticModel + ?Sized>(critic: &C, image: &Tensor, rng: &mut RngStream) -> Result<f64> {
    let r = critic.input_resolution();
    if image.shape != [3, r, r] {
        return Err(Error::InvalidShape(format!("critic expects [3, {r}, {r}], got {:?}", image.shape)));
    }
    let x = Var::constant(image.data.clone(), &[1, 3, r, r]);
    Ok(scores(critic, &critic.params().bind_frozen(), &x, rng)?.item() as f64)
}

/// `mean_n (‖∇ D(x̂_n)‖ − 1)²` at `x̂ = ε real + (1 − ε) fake`, one `ε ~ U[0, 1]`
/// per sample. The result stays differentiable with respect to `p`.
pub fn gradient_penalty<C: CriticModel + ?Sized>(
    critic: &C,
    p: &Bound,
    real: &Var<f32>,
    fake: &Var<f32>,
    rng: &mut RngStream,
) -> Result<Var<f32>> {
    let eps: Vec<f64> = (0..real.shape().first().copied().unwrap_or(0)).map(|_| rng.uniform()).collect();
    gradient_penalty_with_eps(critic, p, real, fake, &eps, rng)
}

pub fn gradient_penalty_with_eps<C: CriticModel + ?Sized>(
    critic: &C,
    p: &Bound,
    real: &Var<f32>,
    fake: &Var<f32>,
    eps: &[f64],
    rng: &mut RngStream,
) -> Result<Var<f32>> {
    if real.shape() != fake.shape() {
        return Err(Error::InvalidBatch(format!("real {:?} vs fake {:?}", real.shape(), fake.shape())));
    }
    check_batch(critic, real)?;
    let n = real.shape()[0];
    if eps.len() != n {
        return Err(Error::InvalidBatch(format!("{} interpolation weights for {n} samples", eps.len())));
    }
    let e = Var::constant(eps.iter().map(|&v| v as f32).collect(), &[n, 1, 1, 1]);
    let mixed = &(&real.detach() * &e) + &(&fake.detach() * &e.neg().add_scalar(1.0));
    let x_hat = Var::param(mixed.to_vec(), mixed.shape());
    let d = critic.forward(p, &with_input_noise(&x_hat, critic.input_noise_sigma(), rng));
    let g = autodiff::grad(&d.sum_all(), &[&x_hat], true).remove(0);
    let norm = g.square().sum_axes(&[1, 2, 3]).add_scalar(1e-16).sqrt();
    Ok(norm.add_scalar(-1.0).square().mean_all())
}

/// Critics with closed-form scores and input gradients.
pub mod testing {
    use super::*;

    /// `D(x) = c`, independent of the input.
    pub struct ConstantCritic {
        pub params: ParamSet,
        pub resolution: usize,
    }

    impl ConstantCritic {
        pub fn new(c: f32, resolution: usize) -> Self {
            let mut params = ParamSet::new();
            params.add("c", Tensor::new(&[1], vec![c]));
            ConstantCritic { params, resolution }
        }
    }

    impl CriticModel for ConstantCritic {
        fn params(&self) -> &ParamSet {
            &self.params
        }
        fn params_mut(&mut self) -> &mut ParamSet {
            &mut self.params
        }
        fn input_resolution(&self) -> usize {
            self.resolution
        }
        fn input_noise_sigma(&self) -> f64 {
            0.0
        }
        fn forward(&self, p: &Bound, x: &Var<f32>) -> Var<f32> {
            p.refs()[0].broadcast_to(&[x.shape()[0]])
        }
    }

    /// `D(x) = <a, x>` with a flat weight over all pixels.
    pub struct LinearCritic {
        pub params: ParamSet,
        pub resolution: usize,
    }

    impl LinearCritic {
        pub fn new(weights: Vec<f32>, resolution: usize) -> Self {
            let mut params = ParamSet::new();
            let n = weights.len();
            params.add("a", Tensor::new(&[n], weights));
            LinearCritic { params, resolution }
        }
    }

    impl CriticModel for LinearCritic {
        fn params(&self) -> &ParamSet {
            &self.params
        }
        fn params_mut(&mut self) -> &mut ParamSet {
            &mut self.params
        }
        fn input_resolution(&self) -> usize {
            self.resolution
        }
        fn input_noise_sigma(&self) -> f64 {
            0.0
        }
        fn forward(&self, p: &Bound, x: &Var<f32>) -> Var<f32> {
            let n = x.shape()[0];
            let a = p.refs()[0];
            x.flatten_from(1).matmul(&a.reshape(&[a.numel(), 1])).reshape(&[n])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    fn small() -> CriticConfig {
        CriticConfig { input_resolution: 8, base_resolution: 4, channels: vec![8, 4], input_noise_sigma: 0.01, mbstd_group: 4 }
    }

    fn batch(rng: &mut RngStream, n: usize, r: usize) -> Var<f32> {
        Var::constant(rng.normal_vec(n * 3 * r * r), &[n, 3, r, r])
    }

    #[test]
    fn score_is_deterministic_without_noise() {
        let mut cfg = small();
        cfg.input_noise_sigma = 0.0;
        let mut rng = RngStream::new(1);
        let c = Critic::new(cfg, &mut rng).unwrap();
        let img = Tensor::new(&[3, 8, 8], rng.normal_vec(192));
        let a = critic_score(&c, &img, &mut RngStream::new(1)).unwrap();
        let b = critic_score(&c, &img, &mut RngStream::new(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn input_noise_changes_score() {
        let mut rng = RngStream::new(2);
        let c = Critic::new(small(), &mut rng).unwrap();
        let img = Tensor::new(&[3, 8, 8], rng.normal_vec(192));
        let a = critic_score(&c, &img, &mut RngStream::new(1)).unwrap();
        let b = critic_score(&c, &img, &mut RngStream::new(2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn fresh_critic_scores_are_finite() {
        let mut rng = RngStream::new(3);
        let c = Critic::new(small(), &mut rng).unwrap();
        let x = batch(&mut rng, 16, 8);
        let s = scores(&c, &c.params().bind_frozen(), &x, &mut rng).unwrap();
        assert_eq!(s.shape(), &[16]);
        assert!(s.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let mut rng = RngStream::new(4);
        let c = Critic::new(small(), &mut rng).unwrap();
        let img = Tensor::zeros(&[3, 4, 4]);
        assert!(matches!(critic_score(&c, &img, &mut rng), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn constant_critic_penalty_is_one() {
        let c = ConstantCritic::new(0.7, 4);
        let mut rng = RngStream::new(5);
        let (r, f) = (batch(&mut rng, 3, 4), batch(&mut rng, 3, 4));
        let gp = gradient_penalty(&c, &c.params.bind(), &r, &f, &mut rng).unwrap();
        assert!((gp.item() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unit_gradient_linear_critic_has_zero_penalty() {
        let n = 3 * 4 * 4;
        let c = LinearCritic::new(vec![1.0 / (n as f32).sqrt(); n], 4);
        let mut rng = RngStream::new(6);
        let (r, f) = (batch(&mut rng, 2, 4), batch(&mut rng, 2, 4));
        let gp = gradient_penalty(&c, &c.params.bind(), &r, &f, &mut rng).unwrap();
        assert!(gp.item().abs() < 1e-6);
    }

    #[test]
    fn linear_critic_penalty_matches_closed_form() {
        // the gradient of <a, x> is a everywhere, so the penalty is (‖a‖ - 1)^2
        let a = vec![0.3f32, -1.1, 0.5];
        let c = LinearCritic::new(a.clone(), 1);
        let mut rng = RngStream::new(7);
        let (r, f) = (batch(&mut rng, 2, 1), batch(&mut rng, 2, 1));
        let gp = gradient_penalty(&c, &c.params.bind(), &r, &f, &mut rng).unwrap();
        let norm = a.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        assert!((gp.item() as f64 - (norm - 1.0).powi(2)).abs() < 1e-6);
    }

    #[test]
    fn mirrored_eps_swaps_real_and_fake() {
        let mut rng = RngStream::new(8);
        let mut cfg = small();
        cfg.input_noise_sigma = 0.0;
        let c = Critic::new(cfg, &mut rng).unwrap();
        let (r, f) = (batch(&mut rng, 4, 8), batch(&mut rng, 4, 8));
        let eps = [0.1, 0.5, 0.8, 0.33];
        let mirrored: Vec<f64> = eps.iter().map(|e| 1.0 - e).collect();
        let p = c.params().bind();
        let a = gradient_penalty_with_eps(&c, &p, &r, &f, &eps, &mut rng).unwrap().item();
        let b = gradient_penalty_with_eps(&c, &p, &f, &r, &mirrored, &mut rng).unwrap().item();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        assert!(a >= 0.0);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let c = ConstantCritic::new(0.0, 4);
        let e = Var::constant(vec![], &[0, 3, 4, 4]);
        let mut rng = RngStream::new(9);
        assert!(matches!(gradient_penalty(&c, &c.params.bind(), &e, &e, &mut rng), Err(Error::InvalidBatch(_))));
    }

    #[test]
    fn penalty_gradient_reaches_critic_params() {
        let mut rng = RngStream::new(10);
        let c = Critic::new(small(), &mut rng).unwrap();
        let (r, f) = (batch(&mut rng, 4, 8), batch(&mut rng, 4, 8));
        let p = c.params().bind();
        let gp = gradient_penalty(&c, &p, &r, &f, &mut rng).unwrap();
        let g = autodiff::grad(&gp, &p.refs(), false);
        assert!(g.iter().any(|t| t.data().iter().any(|v| *v != 0.0)));
        assert!(g.iter().all(|t| t.data().iter().all(|v| v.is_finite())));
    }
}
