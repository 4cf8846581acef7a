//! Style-based synthesis network with texton broadcasting at every
//! resolution up to a cutoff, and the bottom constant replaced by a TB module.

use autodiff::Var;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{add_bias, lrelu, pixel_norm, Linear, ModConv, NoiseInjection};
use crate::params::{Bound, ParamId, ParamSet, Tensor};
use crate::rng::RngStream;
use crate::texton::{sample_phase_with, tb_apply, PhaseMode, PhaseSample, TbCondition, TbParams, TbVars, TextonBank};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TbMode {
    /// One TB site per resolution from the bottom through the cutoff.
    #[default]
    MultiScale,
    /// Only the bottom tensor is a TB module.
    BottomOnly,
    /// Learned constant bottom tensor, no TB at all.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    pub base_resolution: usize,
    pub train_resolution: usize,
    pub tb_cutoff_resolution: usize,
    /// Feature width per stage, bottom stage first.
    pub channels: Vec<usize>,
    pub textons_per_module: usize,
    pub tb_mode: TbMode,
    pub fixed_phase: bool,
    pub phase_mode: PhaseMode,
    pub tb_condition_on_latent: bool,
    pub mapping_layers: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            latent_dim: 128,
            base_resolution: 4,
            train_resolution: 64,
            tb_cutoff_resolution: 16,
            channels: vec![128, 128, 64, 32, 16],
            textons_per_module: 16,
            tb_mode: TbMode::MultiScale,
            fixed_phase: false,
            phase_mode: PhaseMode::Scalar,
            tb_condition_on_latent: false,
            mapping_layers: 4,
        }
    }
}

fn is_pow2_multiple(big: usize, small: usize) -> bool {
    small > 0 && big >= small && big % small == 0 && (big / small).is_power_of_two()
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 || self.textons_per_module == 0 || self.mapping_layers == 0 {
            return bad("latent_dim, textons_per_module and mapping_layers must be positive".into());
        }
        if !is_pow2_multiple(self.train_resolution, self.base_resolution) {
            return bad(format!(
                "train_resolution {} is not base_resolution {} times a power of two",
                self.train_resolution, self.base_resolution
            ));
        }
        if self.tb_cutoff_resolution > self.train_resolution {
            return bad(format!(
                "tb_cutoff_resolution {} exceeds train_resolution {}",
                self.tb_cutoff_resolution, self.train_resolution
            ));
        }
        if !is_pow2_multiple(self.tb_cutoff_resolution, self.base_resolution) {
            return bad(format!(
                "tb_cutoff_resolution {} is not a layer resolution",
                self.tb_cutoff_resolution
            ));
        }
        if self.channels.len() != self.stages() {
            return bad(format!("{} channel widths for {} stages", self.channels.len(), self.stages()));
        }
        if self.channels.contains(&0) {
            return bad("channel widths must be positive".into());
        }
        Ok(())
    }

    /// Number of resolutions from base to train inclusive.
    pub fn stages(&self) -> usize {
        (self.train_resolution / self.base_resolution).trailing_zeros() as usize + 1
    }

    pub fn stage_resolution(&self, stage: usize) -> usize {
        self.base_resolution << stage
    }

    /// Stages carrying a TB module, in forward order.
    pub fn tb_stages(&self) -> Vec<usize> {
        match self.tb_mode {
            TbMode::None => vec![],
            TbMode::BottomOnly => vec![0],
            TbMode::MultiScale => {
                (0..self.stages()).filter(|&s| self.stage_resolution(s) <= self.tb_cutoff_resolution).collect()
            }
        }
    }

    /// One noise site per styled convolution.
    pub fn noise_sites(&self) -> usize {
        2 * self.stages() - 1
    }

    /// Spatial scale factor for an output resolution.
    pub fn scale_for(&self, out_resolution: usize) -> Result<usize> {
        if out_resolution < self.train_resolution || out_resolution % self.train_resolution != 0 {
            return Err(Error::UnsupportedResolution {
                requested: out_resolution,
                reason: format!("must be a positive multiple of the training resolution {}", self.train_resolution),
            });
        }
        Ok(out_resolution / self.train_resolution)
    }

    /// Spatial side of every noise site at an output resolution.
    pub fn noise_sizes(&self, out_resolution: usize) -> Result<Vec<usize>> {
        let k = self.scale_for(out_resolution)?;
        let mut sizes = vec![self.base_resolution * k];
        for s in 1..self.stages() {
            let r = self.stage_resolution(s) * k;
            sizes.extend([r, r]);
        }
        Ok(sizes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    pub z: Vec<f32>,
}

impl LatentCode {
    pub fn sample(dim: usize, rng: &mut RngStream) -> Self {
        LatentCode { z: rng.normal_vec(dim) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleVector {
    pub w: Vec<f32>,
}

/// Per-site noise grids `[N, 1, H, W]` for a batch of `N` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseStack {
    pub grids: Vec<Tensor>,
}

impl NoiseStack {
    pub fn batch(&self) -> usize {
        self.grids.first().map_or(0, |g| g.shape[0])
    }
}

pub fn sample_noise(config: &GeneratorConfig, rng: &mut RngStream, out_resolution: usize) -> Result<NoiseStack> {
    sample_noise_batch(config, rng, out_resolution, 1)
}

pub fn sample_noise_batch(
    config: &GeneratorConfig,
    rng: &mut RngStream,
    out_resolution: usize,
    n: usize,
) -> Result<NoiseStack> {
    let sizes = config.noise_sizes(out_resolution).map_err(|e| Error::InvalidShape(e.to_string()))?;
    let grids = sizes.iter().map(|&r| Tensor::new(&[n, 1, r, r], rng.normal_vec(n * r * r))).collect();
    Ok(NoiseStack { grids })
}

#[derive(Clone, Debug)]
struct ToRgb {
    conv: ModConv,
    bias: ParamId,
}

impl ToRgb {
    fn forward(&self, p: &Bound, x: &Var<f32>, w: &Var<f32>) -> Var<f32> {
        add_bias(&self.conv.forward(p, x, w), p.get(self.bias))
    }
}

#[derive(Clone, Debug)]
struct StyledLayer {
    conv: ModConv,
    noise: NoiseInjection,
    bias: ParamId,
}

impl StyledLayer {
    fn new(ps: &mut ParamSet, name: &str, d: usize, cin: usize, cout: usize, rng: &mut RngStream) -> Self {
        let conv = ModConv::new(ps, name, d, cin, cout, 3, true, rng);
        let noise = NoiseInjection::new(ps, name);
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        StyledLayer { conv, noise, bias }
    }

    /// conv, then noise and optional TB summed in, then bias and activation.
    fn forward(&self, p: &Bound, x: &Var<f32>, w: &Var<f32>, noise: &Tensor, tb: Option<Var<f32>>) -> Var<f32> {
        let mut y = self.noise.forward(p, &self.conv.forward(p, x, w), &noise.to_var());
        if let Some(t) = tb {
            y = y + t;
        }
        lrelu(&add_bias(&y, p.get(self.bias)))
    }
}

#[derive(Clone, Debug)]
enum Bottom {
    Tb,
    Const(ParamId),
}

#[derive(Clone, Debug)]
struct Stage {
    /// Absent for the bottom stage, which has a single styled layer.
    up: Option<StyledLayer>,
    layer: StyledLayer,
    rgb: ToRgb,
}

#[derive(Clone, Debug)]
struct Site {
    stage: usize,
    params: TbParams,
    cond: Option<Linear>,
}

#[derive(Clone, Debug)]
struct Layout {
    mapping: Vec<Linear>,
    bottom: Bottom,
    stages: Vec<Stage>,
    sites: Vec<Site>,
    noise_gains: Vec<ParamId>,
}

/// Generator parameters θ together with the structure their config implies.
#[derive(Clone, Debug)]
pub struct Generator {
    config: GeneratorConfig,
    params: ParamSet,
    layout: Layout,
}

/// Generator parameters and config; the serializable half of a [`Generator`].
pub type GeneratorState = Generator;

impl Generator {
    pub fn new(config: GeneratorConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let mut ps = ParamSet::new();
        let d = config.latent_dim;
        let mapping = (0..config.mapping_layers)
            .map(|i| Linear::new(&mut ps, &format!("map{i}"), d, d, 0.01, 0.0, rng))
            .collect();
        let tb_stages = config.tb_stages();
        let p = config.textons_per_module;
        let mut sites = Vec::new();
        let mut add_site = |ps: &mut ParamSet, stage: usize, c: usize, rng: &mut RngStream| {
            let res = config.stage_resolution(stage);
            let params = TextonBank::init(p, c, rng).register(ps, &format!("tb{res}"));
            let cond = config
                .tb_condition_on_latent
                .then(|| Linear::new(ps, &format!("tb{res}.cond"), d, 3 * p, 1.0, 0.0, rng));
            sites.push(Site { stage, params, cond });
        };
        let c0 = config.channels[0];
        let base = config.base_resolution;
        let bottom = if tb_stages.contains(&0) {
            add_site(&mut ps, 0, c0, rng);
            Bottom::Tb
        } else {
            Bottom::Const(ps.add("const", Tensor::new(&[1, c0, base, base], rng.normal_vec(c0 * base * base))))
        };
        let mut stages = Vec::new();
        for s in 0..config.stages() {
            let res = config.stage_resolution(s);
            let c = config.channels[s];
            let up = (s > 0).then(|| StyledLayer::new(&mut ps, &format!("s{res}.up"), d, config.channels[s - 1], c, rng));
            if s > 0 && tb_stages.contains(&s) {
                add_site(&mut ps, s, c, rng);
            }
            let layer = StyledLayer::new(&mut ps, &format!("s{res}.conv"), d, c, c, rng);
            let rgb = ToRgb {
                conv: ModConv::new(&mut ps, &format!("s{res}.rgb"), d, c, 3, 1, false, rng),
                bias: ps.add(format!("s{res}.rgb.bias"), Tensor::zeros(&[3])),
            };
            stages.push(Stage { up, layer, rgb });
        }
        let noise_gains = stages
            .iter()
            .flat_map(|st| st.up.iter().chain([&st.layer]).map(|l| l.noise.gain_id()))
            .collect();
        let layout = Layout { mapping, bottom, stages, sites, noise_gains };
        Ok(Generator { config, params: ps, layout })
    }

    /// Rebuilds the structure for `config` and installs `params` into it.
    pub fn from_params(config: GeneratorConfig, params: ParamSet) -> Result<Self> {
        let mut g = Generator::new(config, &mut RngStream::new(0))?;
        g.params.check_structure(&params, "generator parameters")?;
        g.params = params;
        Ok(g)
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn tb_site_count(&self) -> usize {
        self.layout.sites.len()
    }

    /// Resolutions of the TB sites, in the order phases are consumed.
    pub fn tb_site_resolutions(&self) -> Vec<usize> {
        self.layout.sites.iter().map(|s| self.config.stage_resolution(s.stage)).collect()
    }

    pub fn texton_bank(&self, site: usize) -> TextonBank {
        TextonBank::from_params(&self.params, &self.layout.sites[site].params)
    }

    pub fn set_noise_gains(&mut self, value: f32) {
        for &id in &self.layout.noise_gains {
            self.params.get_mut(id).data.fill(value);
        }
    }

    /// One phase per TB site.
    pub fn sample_phases(&self, rng: &mut RngStream) -> Vec<PhaseSample> {
        (0..self.tb_site_count()).map(|_| sample_phase_with(rng, self.config.fixed_phase, self.config.phase_mode)).collect()
    }

    /// Mapping network on a batch `[N, D] -> [N, D]`.
    pub fn map_batch(&self, p: &Bound, z: &Var<f32>) -> Var<f32> {
        let mut x = pixel_norm(z);
        for l in &self.layout.mapping {
            x = lrelu(&l.forward(p, &x));
        }
        x
    }

    pub fn map_latent(&self, z: &LatentCode) -> Result<StyleVector> {
        let d = self.config.latent_dim;
        if z.z.len() != d {
            return Err(Error::InvalidLatent(format!("length {} but latent_dim is {d}", z.z.len())));
        }
        if z.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLatent("non-finite entries".into()));
        }
        let w = self.map_batch(&self.params.bind_frozen(), &Var::constant(z.z.clone(), &[1, d]));
        Ok(StyleVector { w: w.to_vec() })
    }

    /// Differentiable synthesis: styles `[N, D]` to images `[N, 3, R, R]`.
    ///
    /// `phases[n]` holds one entry per TB site for sample `n`. With
    /// `fixed_phase` set, every Δ is treated as zero.
    pub fn synthesize(
        &self,
        p: &Bound,
        w: &Var<f32>,
        noise: &NoiseStack,
        phases: &[Vec<PhaseSample>],
        out_resolution: usize,
    ) -> Result<Var<f32>> {
        let cfg = &self.config;
        let k = cfg.scale_for(out_resolution)?;
        let n = w.shape()[0];
        if w.ndim() != 2 || w.shape()[1] != cfg.latent_dim {
            return Err(Error::InvalidLatent(format!("style batch shape {:?}", w.shape())));
        }
        if phases.len() != n || phases.iter().any(|ph| ph.len() != self.tb_site_count()) {
            return Err(Error::InvalidPhase(format!(
                "need {} phase samples for each of {n} images",
                self.tb_site_count()
            )));
        }
        let sizes = cfg.noise_sizes(out_resolution)?;
        if noise.grids.len() != sizes.len()
            || noise.grids.iter().zip(&sizes).any(|(g, &r)| g.shape != [n, 1, r, r])
        {
            return Err(Error::InvalidShape(format!(
                "noise stack does not match {n} images at resolution {out_resolution}"
            )));
        }

        let tb_out = |site: usize, c_res: usize| -> Var<f32> {
            let s = &self.layout.sites[site];
            let ph: Vec<PhaseSample> = phases
                .iter()
                .map(|v| if cfg.fixed_phase { PhaseSample::ZERO } else { v[site] })
                .collect();
            let cond = s.cond.as_ref().map(|head| {
                let pn = cfg.textons_per_module;
                let out = head.forward(p, w);
                TbCondition {
                    freq: out.narrow(1, 0, 2 * pn).reshape(&[n, pn, 2]),
                    phase: out.narrow(1, 2 * pn, pn),
                }
            });
            tb_apply(&TbVars::bind(p, &s.params), &ph, cond.as_ref(), c_res, c_res)
        };

        let base = cfg.base_resolution * k;
        let mut site = 0;
        let mut x = match &self.layout.bottom {
            Bottom::Tb => {
                site += 1;
                tb_out(0, base)
            }
            Bottom::Const(id) => {
                let c = p.get(*id);
                let tiled_w = Var::concat(&vec![c.clone(); k], 3);
                let tiled = Var::concat(&vec![tiled_w; k], 2);
                tiled.broadcast_to(&[n, cfg.channels[0], base, base])
            }
        };
        let mut grids = noise.grids.iter();
        let mut rgb: Option<Var<f32>> = None;
        for (s, stage) in self.layout.stages.iter().enumerate() {
            if let Some(up) = &stage.up {
                let res = cfg.stage_resolution(s) * k;
                let tb = (site < self.tb_site_count() && self.layout.sites[site].stage == s).then(|| {
                    site += 1;
                    tb_out(site - 1, res)
                });
                x = up.forward(p, &x.upsample_bilinear2(), w, grids.next().unwrap(), tb);
            }
            x = stage.layer.forward(p, &x, w, grids.next().unwrap(), None);
            let y = stage.rgb.forward(p, &x, w);
            rgb = Some(match rgb {
                Some(prev) => prev.upsample_bilinear2() + y,
                None => y,
            });
        }
        Ok(rgb.expect("at least one stage").tanh())
    }

    /// Renders one image `[3, R, R]` with values in `[-1, 1]`.
    pub fn generate(
        &self,
        z: &LatentCode,
        noise: &NoiseStack,
        phases: &[PhaseSample],
        out_resolution: usize,
    ) -> Result<Tensor> {
        let w = self.map_latent(z)?;
        self.generate_from_style(&w, noise, phases, out_resolution)
    }

    pub fn generate_from_style(
        &self,
        w: &StyleVector,
        noise: &NoiseStack,
        phases: &[PhaseSample],
        out_resolution: usize,
    ) -> Result<Tensor> {
        if noise.batch() != 1 {
            return Err(Error::InvalidShape(format!("single-image noise stack has batch {}", noise.batch())));
        }
        let wv = Var::constant(w.w.clone(), &[1, self.config.latent_dim]);
        let img = self.synthesize(&self.params.bind_frozen(), &wv, noise, &[phases.to_vec()], out_resolution)?;
        let r = out_resolution;
        Ok(Tensor::new(&[3, r, r], img.to_vec()))
    }

    /// Fresh `(z, n, Δ)` for each of `count` images, rendered in one batch.
    pub fn sample_images(&self, rng: &mut RngStream, count: usize, out_resolution: usize) -> Result<Vec<Tensor>> {
        let d = self.config.latent_dim;
        let z = Var::constant(rng.normal_vec(count * d), &[count, d]);
        let p = self.params.bind_frozen();
        let w = self.map_batch(&p, &z);
        self.render_styles(&p, &w, rng, out_resolution)
    }

    /// Renders styles `[N, D]` with freshly drawn noise and phases.
    pub fn render_styles(&self, p: &Bound, w: &Var<f32>, rng: &mut RngStream, out_resolution: usize) -> Result<Vec<Tensor>> {
        let n = w.shape()[0];
        let noise = sample_noise_batch(&self.config, rng, out_resolution, n)?;
        let phases: Vec<_> = (0..n).map(|_| self.sample_phases(rng)).collect();
        let img = self.synthesize(p, w, &noise, &phases, out_resolution)?;
        Ok(split_batch(&img))
    }
}

/// Splits `[N, ...]` into `N` tensors.
pub fn split_batch(x: &Var<f32>) -> Vec<Tensor> {
    let n = x.shape()[0];
    let per = x.numel() / n.max(1);
    x.data().chunks(per).map(|c| Tensor::new(&x.shape()[1..], c.to_vec())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: TbMode) -> GeneratorConfig {
        GeneratorConfig {
            latent_dim: 8,
            base_resolution: 4,
            train_resolution: 16,
            tb_cutoff_resolution: 8,
            channels: vec![8, 8, 4],
            textons_per_module: 4,
            tb_mode: mode,
            ..GeneratorConfig::default()
        }
    }

    fn render(g: &Generator, z: &LatentCode, seed: u64, res: usize) -> Tensor {
        let mut rng = RngStream::new(seed);
        let noise = sample_noise(g.config(), &mut rng, res).unwrap();
        let ph = g.sample_phases(&mut rng);
        g.generate(z, &noise, &ph, res).unwrap()
    }

    #[test]
    fn tb_placement_follows_mode() {
        let mut rng = RngStream::new(0);
        let mut big = small(TbMode::MultiScale);
        big.train_resolution = 32;
        big.channels = vec![8, 8, 4, 4];
        let g = Generator::new(big.clone(), &mut rng).unwrap();
        assert_eq!(g.tb_site_resolutions(), vec![4, 8]);
        big.tb_mode = TbMode::BottomOnly;
        assert_eq!(Generator::new(big.clone(), &mut rng).unwrap().tb_site_resolutions(), vec![4]);
        big.tb_mode = TbMode::None;
        assert_eq!(Generator::new(big, &mut rng).unwrap().tb_site_count(), 0);
    }

    #[test]
    fn mapping_is_deterministic_and_checks_length() {
        let mut rng = RngStream::new(1);
        let g = Generator::new(small(TbMode::MultiScale), &mut rng).unwrap();
        let z = LatentCode::sample(8, &mut rng);
        assert_eq!(g.map_latent(&z).unwrap(), g.map_latent(&z).unwrap());
        let origin = LatentCode { z: vec![0.0; 8] };
        assert_eq!(g.map_latent(&origin).unwrap(), g.map_latent(&origin).unwrap());
        assert!(matches!(g.map_latent(&LatentCode { z: vec![0.0; 3] }), Err(Error::InvalidLatent(_))));
    }

    #[test]
    fn mapped_styles_vary_across_latents() {
        let mut rng = RngStream::new(2);
        let g = Generator::new(small(TbMode::MultiScale), &mut rng).unwrap();
        let ws: Vec<Vec<f32>> = (0..100).map(|_| g.map_latent(&LatentCode::sample(8, &mut rng)).unwrap().w).collect();
        assert!(ws.iter().flatten().all(|v| v.is_finite()));
        for j in 0..8 {
            assert!(ws.iter().any(|w| w[j] != ws[0][j]), "component {j} constant");
        }
    }

    #[test]
    fn noise_stack_shapes_and_determinism() {
        let cfg = small(TbMode::MultiScale);
        let a = sample_noise(&cfg, &mut RngStream::new(3), 16).unwrap();
        let b = sample_noise(&cfg, &mut RngStream::new(3), 16).unwrap();
        assert_eq!(a, b);
        assert_eq!(cfg.stages(), 3);
        assert_eq!(a.grids.len(), 2 * 3 - 1);
        let sides: Vec<usize> = a.grids.iter().map(|g| g.shape[3]).collect();
        assert_eq!(sides, vec![4, 8, 8, 16, 16]);
        for g in &a.grids {
            let hw = g.numel() as f64;
            let mean = g.data.iter().map(|&v| v as f64).sum::<f64>() / hw;
            assert!(mean.abs() < 4.0 / hw.sqrt());
        }
        assert!(matches!(sample_noise(&cfg, &mut RngStream::new(3), 12), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn generate_is_deterministic_and_bounded() {
        let mut rng = RngStream::new(4);
        let g = Generator::new(small(TbMode::MultiScale), &mut rng).unwrap();
        let z = LatentCode::sample(8, &mut rng);
        let a = render(&g, &z, 10, 16);
        assert_eq!(a, render(&g, &z, 10, 16));
        assert_eq!(a.shape, vec![3, 16, 16]);
        assert!(a.data.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn doubled_resolution_renders() {
        let mut rng = RngStream::new(5);
        let g = Generator::new(small(TbMode::MultiScale), &mut rng).unwrap();
        let z = LatentCode::sample(8, &mut rng);
        assert_eq!(render(&g, &z, 1, 32).shape, vec![3, 32, 32]);
        let noise = sample_noise(g.config(), &mut rng, 16).unwrap();
        let ph = g.sample_phases(&mut rng);
        assert!(matches!(g.generate(&z, &noise, &ph, 8), Err(Error::UnsupportedResolution { .. })));
    }

    #[test]
    fn phase_count_is_checked() {
        let mut rng = RngStream::new(6);
        let g = Generator::new(small(TbMode::MultiScale), &mut rng).unwrap();
        let z = LatentCode::sample(8, &mut rng);
        let noise = sample_noise(g.config(), &mut rng, 16).unwrap();
        assert!(matches!(g.generate(&z, &noise, &[], 16), Err(Error::InvalidPhase(_))));
    }

    #[test]
    fn degenerate_generator_ignores_noise() {
        let mut rng = RngStream::new(7);
        let g = Generator::new(small(TbMode::None), &mut rng).unwrap();
        let z = LatentCode::sample(8, &mut rng);
        assert_eq!(render(&g, &z, 1, 16), render(&g, &z, 2, 16));
    }

    #[test]
    fn noise_and_phase_move_the_output() {
        let mut rng = RngStream::new(8);
        let mut g = Generator::new(small(TbMode::MultiScale), &mut rng).unwrap();
        g.set_noise_gains(0.5);
        let z = LatentCode::sample(8, &mut rng);
        let noise = sample_noise(g.config(), &mut rng, 16).unwrap();
        let ph = g.sample_phases(&mut rng);
        let base = g.generate(&z, &noise, &ph, 16).unwrap();
        let noise2 = sample_noise(g.config(), &mut rng, 16).unwrap();
        assert_ne!(base, g.generate(&z, &noise2, &ph, 16).unwrap());
        let ph2 = g.sample_phases(&mut rng);
        assert_ne!(base, g.generate(&z, &noise, &ph2, 16).unwrap());
    }

    #[test]
    fn fixed_phase_ignores_phase_stream() {
        let mut cfg = small(TbMode::MultiScale);
        cfg.fixed_phase = true;
        let mut rng = RngStream::new(9);
        let g = Generator::new(cfg, &mut rng).unwrap();
        let z = LatentCode::sample(8, &mut rng);
        let noise = sample_noise(g.config(), &mut rng, 16).unwrap();
        let random = vec![PhaseSample::new(1.3).unwrap(); g.tb_site_count()];
        assert_eq!(
            g.generate(&z, &noise, &random, 16).unwrap(),
            g.generate(&z, &noise, &g.sample_phases(&mut rng), 16).unwrap()
        );
    }

    #[test]
    fn conditioned_tb_renders() {
        let mut cfg = small(TbMode::MultiScale);
        cfg.tb_condition_on_latent = true;
        let mut rng = RngStream::new(10);
        let g = Generator::new(cfg, &mut rng).unwrap();
        let z = LatentCode::sample(8, &mut rng);
        assert!(render(&g, &z, 1, 16).data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = small(TbMode::MultiScale);
        c.train_resolution = 24;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = small(TbMode::MultiScale);
        c.tb_cutoff_resolution = 32;
        assert!(c.validate().is_err());
        let mut c = small(TbMode::MultiScale);
        c.channels.pop();
        assert!(c.validate().is_err());
    }

    #[test]
    fn params_roundtrip_through_from_params() {
        let mut rng = RngStream::new(11);
        let g = Generator::new(small(TbMode::MultiScale), &mut rng).unwrap();
        let h = Generator::from_params(g.config().clone(), g.params().clone()).unwrap();
        assert_eq!(g.params().digest(), h.params().digest());
        let other = Generator::new(small(TbMode::BottomOnly), &mut rng).unwrap();
        assert!(Generator::from_params(g.config().clone(), other.params().clone()).is_err());
    }
}
