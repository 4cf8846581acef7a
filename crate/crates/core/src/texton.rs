//! Texton broadcasting: trainable texton vectors replicated over the plane and
//! modulated by 2-d sinusoids whose phase is shifted by a random Δ per pass.
//!
//! The broadcast map of texton `i` is
//! `BM_i(h, w) = A_i sin(2π ς(f_i)·[h, w] + φ_i + Δ) + B_i` with 1-based
//! coordinates, and the module output is `Y(c, h, w) = Σ_i v_i(c) BM_i(h, w)`.
//!
//! [`tb_apply`] is the differentiable batched form used by the generator.
//! [`compute_broadcast_map`] and [`tb_forward`] are plain double-precision
//! entry points over a [`TextonBank`] value.

use std::f64::consts::TAU;

use autodiff::{Float, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamSet, Tensor};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineParams {
    /// Pre-sigmoid frequency `[f_h, f_w]`.
    pub raw_freq: [f64; 2],
    pub phase: f64,
    pub amplitude: f64,
    pub offset: f64,
}

impl SineParams {
    pub fn is_finite(&self) -> bool {
        self.raw_freq.iter().all(|v| v.is_finite())
            && self.phase.is_finite()
            && self.amplitude.is_finite()
            && self.offset.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextonBank {
    textons: Vec<Vec<f64>>,
    sine: Vec<SineParams>,
}

impl TextonBank {
    pub fn new(textons: Vec<Vec<f64>>, sine: Vec<SineParams>) -> Result<Self> {
        if textons.is_empty() {
            return Err(Error::InvalidBank("a bank needs at least one texton".into()));
        }
        if textons.len() != sine.len() {
            return Err(Error::InvalidBank(format!(
                "{} textons but {} sinusoid parameter sets",
                textons.len(),
                sine.len()
            )));
        }
        let c = textons[0].len();
        if c == 0 {
            return Err(Error::InvalidBank("zero-width textons".into()));
        }
        if let Some(i) = textons.iter().position(|v| v.len() != c) {
            return Err(Error::InvalidBank(format!(
                "texton {i} has length {}, expected {c}",
                textons[i].len()
            )));
        }
        Ok(TextonBank { textons, sine })
    }

    /// `v ~ N(0, 1/√C)`, `raw_freq ~ N(0, 1)`, `φ ~ U[0, 2π)`, `A = 1`, `B = 0`.
    pub fn init(p: usize, c: usize, rng: &mut RngStream) -> Self {
        let std = 1.0 / (c as f64).sqrt();
        let textons = (0..p).map(|_| (0..c).map(|_| std * rng.normal()).collect()).collect();
        let sine = (0..p)
            .map(|_| SineParams {
                raw_freq: [rng.normal(), rng.normal()],
                phase: rng.uniform_range(0.0, TAU),
                amplitude: 1.0,
                offset: 0.0,
            })
            .collect();
        TextonBank { textons, sine }
    }

    pub fn p(&self) -> usize {
        self.textons.len()
    }

    pub fn c(&self) -> usize {
        self.textons[0].len()
    }

    pub fn textons(&self) -> &[Vec<f64>] {
        &self.textons
    }

    pub fn texton_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.textons[i]
    }

    pub fn sine(&self) -> &[SineParams] {
        &self.sine
    }

    pub fn sine_mut(&mut self, i: usize) -> &mut SineParams {
        &mut self.sine[i]
    }

    /// Registers the bank as `{prefix}.textons|freq|phase|amp|offset`.
    pub fn register(&self, params: &mut ParamSet, prefix: &str) -> TbParams {
        let f = |v: f64| v as f32;
        let (p, c) = (self.p(), self.c());
        let textons = self.textons.iter().flatten().map(|&v| f(v)).collect();
        let freq = self.sine.iter().flat_map(|s| s.raw_freq).map(f).collect();
        let col = |g: fn(&SineParams) -> f64| self.sine.iter().map(|s| f(g(s))).collect();
        TbParams {
            textons: params.add(format!("{prefix}.textons"), Tensor::new(&[p, c], textons)),
            freq: params.add(format!("{prefix}.freq"), Tensor::new(&[p, 2], freq)),
            phase: params.add(format!("{prefix}.phase"), Tensor::new(&[p], col(|s| s.phase))),
            amplitude: params.add(format!("{prefix}.amp"), Tensor::new(&[p], col(|s| s.amplitude))),
            offset: params.add(format!("{prefix}.offset"), Tensor::new(&[p], col(|s| s.offset))),
        }
    }

    /// Reads a registered bank back out of a parameter set.
    pub fn from_params(params: &ParamSet, ids: &TbParams) -> Self {
        let d = |id: ParamId| params.get(id).data.iter().map(|&v| v as f64).collect::<Vec<f64>>();
        let (textons, freq, phase, amp, offset) =
            (d(ids.textons), d(ids.freq), d(ids.phase), d(ids.amplitude), d(ids.offset));
        let p = phase.len();
        let c = textons.len() / p;
        TextonBank {
            textons: textons.chunks(c).map(<[f64]>::to_vec).collect(),
            sine: (0..p)
                .map(|i| SineParams {
                    raw_freq: [freq[2 * i], freq[2 * i + 1]],
                    phase: phase[i],
                    amplitude: amp[i],
                    offset: offset[i],
                })
                .collect(),
        }
    }

    fn vars<T: Float>(&self, param: bool) -> TbVars<T> {
        let mk = |d: Vec<f64>, s: &[usize]| {
            let d = d.into_iter().map(T::of).collect();
            if param {
                Var::param(d, s)
            } else {
                Var::constant(d, s)
            }
        };
        let p = self.p();
        TbVars {
            textons: mk(self.textons.iter().flatten().copied().collect(), &[p, self.c()]),
            freq: mk(self.sine.iter().flat_map(|s| s.raw_freq).collect(), &[p, 2]),
            phase: mk(self.sine.iter().map(|s| s.phase).collect(), &[p]),
            amplitude: mk(self.sine.iter().map(|s| s.amplitude).collect(), &[p]),
            offset: mk(self.sine.iter().map(|s| s.offset).collect(), &[p]),
        }
    }

    /// The bank as differentiable leaves.
    pub fn to_vars<T: Float>(&self) -> TbVars<T> {
        self.vars(true)
    }
}

/// Parameter handles of one TB site inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TbParams {
    pub textons: ParamId,
    pub freq: ParamId,
    pub phase: ParamId,
    pub amplitude: ParamId,
    pub offset: ParamId,
}

/// TB parameters as graph values: textons `[P, C]`, freq `[P, 2]`, and
/// phase, amplitude, offset `[P]`.
#[derive(Clone)]
pub struct TbVars<T: Float> {
    pub textons: Var<T>,
    pub freq: Var<T>,
    pub phase: Var<T>,
    pub amplitude: Var<T>,
    pub offset: Var<T>,
}

impl TbVars<f32> {
    pub fn bind(bound: &crate::params::Bound, ids: &TbParams) -> Self {
        TbVars {
            textons: bound.get(ids.textons).clone(),
            freq: bound.get(ids.freq).clone(),
            phase: bound.get(ids.phase).clone(),
            amplitude: bound.get(ids.amplitude).clone(),
            offset: bound.get(ids.offset).clone(),
        }
    }
}

impl<T: Float> TbVars<T> {
    pub fn refs(&self) -> [&Var<T>; 5] {
        [&self.textons, &self.freq, &self.phase, &self.amplitude, &self.offset]
    }
}

/// Per-sample additive offsets to `raw_freq` (`[N, P, 2]`) and `φ` (`[N, P]`),
/// produced by a latent-conditioned head.
#[derive(Clone)]
pub struct TbCondition<T: Float> {
    pub freq: Var<T>,
    pub phase: Var<T>,
}

/// The random phase of one TB module for one forward pass.
///
/// `shift` is a per-axis pixel translation, zero unless the non-default
/// per-axis mode is in use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSample {
    pub delta: f64,
    pub shift: [f64; 2],
}

impl PhaseSample {
    pub const ZERO: PhaseSample = PhaseSample { delta: 0.0, shift: [0.0, 0.0] };

    pub fn new(delta: f64) -> Result<Self> {
        if !(0.0..TAU).contains(&delta) {
            return Err(Error::InvalidPhase(format!("delta {delta} outside [0, 2π)")));
        }
        Ok(PhaseSample { delta, shift: [0.0, 0.0] })
    }
}

/// How Δ is drawn for each TB module.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// One scalar Δ ~ U[0, 2π) per module.
    #[default]
    Scalar,
    /// Scalar Δ plus an independent pixel shift per axis.
    PerAxis,
}

/// Largest per-axis shift in pixels drawn in [`PhaseMode::PerAxis`].
pub const MAX_AXIS_SHIFT: f64 = 256.0;

pub fn sample_phase(rng: &mut RngStream, fixed_phase: bool) -> PhaseSample {
    sample_phase_with(rng, fixed_phase, PhaseMode::Scalar)
}

pub fn sample_phase_with(rng: &mut RngStream, fixed_phase: bool, mode: PhaseMode) -> PhaseSample {
    // always draw, so fixed and random runs consume the stream identically
    let delta = rng.uniform_range(0.0, TAU);
    let shift = match mode {
        PhaseMode::Scalar => [0.0, 0.0],
        PhaseMode::PerAxis => [rng.uniform_range(0.0, MAX_AXIS_SHIFT), rng.uniform_range(0.0, MAX_AXIS_SHIFT)],
    };
    if fixed_phase {
        PhaseSample::ZERO
    } else {
        PhaseSample { delta: delta.min(TAU - f64::EPSILON * TAU), shift }
    }
}

pub fn sigmoid_freq(raw_freq: [f64; 2]) -> Result<[f64; 2]> {
    if raw_freq.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite raw frequency {raw_freq:?}")));
    }
    Ok(raw_freq.map(|x| {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }))
}

/// One H×W broadcast map, row-major; `values[(h-1)*W + (w-1)]` holds `BM(h, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BroadcastMap {
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
}

impl BroadcastMap {
    /// Value at 1-based coordinates.
    pub fn at(&self, h: usize, w: usize) -> f64 {
        self.values[(h - 1) * self.w + (w - 1)]
    }
}

fn check_size(h: usize, w: usize) -> Result<()> {
    if h < 1 || w < 1 {
        return Err(Error::InvalidShape(format!("broadcast size {h}x{w}")));
    }
    Ok(())
}

pub fn compute_broadcast_map(params: &SineParams, phase: PhaseSample, h: usize, w: usize) -> Result<BroadcastMap> {
    check_size(h, w)?;
    if !params.is_finite() {
        return Err(Error::InvalidParameter("non-finite sinusoid parameters".into()));
    }
    let bank = TextonBank { textons: vec![vec![1.0]], sine: vec![*params] };
    let maps = broadcast_maps(&bank.vars::<f64>(false), &[phase], None, h, w);
    Ok(BroadcastMap { h, w, values: maps.to_vec() })
}

/// Module output `C×H×W` for one phase sample.
pub fn tb_forward(bank: &TextonBank, phase: PhaseSample, h: usize, w: usize) -> Result<Vec<f64>> {
    check_size(h, w)?;
    Ok(tb_apply(&bank.vars::<f64>(false), &[phase], None, h, w).to_vec())
}

fn coords<T: Float>(phases: &[PhaseSample], axis: usize, len: usize) -> Var<T> {
    let data = phases.iter().flat_map(|p| (1..=len).map(move |i| T::of(i as f64 + p.shift[axis]))).collect();
    let shape = if axis == 0 { [phases.len(), 1, len, 1] } else { [phases.len(), 1, 1, len] };
    Var::constant(data, &shape)
}

/// Broadcast maps `[N, P, H, W]`, one batch entry per phase sample.
pub fn broadcast_maps<T: Float>(
    tb: &TbVars<T>,
    phases: &[PhaseSample],
    cond: Option<&TbCondition<T>>,
    h: usize,
    w: usize,
) -> Var<T> {
    let n = phases.len();
    let p = tb.phase.numel();
    let (freq, phase) = match cond {
        Some(c) => (
            tb.freq.reshape(&[1, p, 2]) + c.freq.clone(),
            tb.phase.reshape(&[1, p]) + c.phase.clone(),
        ),
        None => (tb.freq.reshape(&[1, p, 2]), tb.phase.reshape(&[1, p])),
    };
    let nb = freq.shape()[0];
    let sf = freq.sigmoid();
    let fh = sf.narrow(2, 0, 1).reshape(&[nb, p, 1, 1]);
    let fw = sf.narrow(2, 1, 1).reshape(&[nb, p, 1, 1]);
    let spatial = (fh * coords::<T>(phases, 0, h) + fw * coords::<T>(phases, 1, w)).scale(TAU);
    let delta = Var::constant(phases.iter().map(|s| T::of(s.delta)).collect(), &[n, 1, 1, 1]);
    let arg = spatial + phase.reshape(&[nb, p, 1, 1]) + delta;
    arg.sin() * tb.amplitude.reshape(&[1, p, 1, 1]) + tb.offset.reshape(&[1, p, 1, 1])
}

/// Texton broadcasting for a batch of phase samples: `[N, C, H, W]`.
pub fn tb_apply<T: Float>(
    tb: &TbVars<T>,
    phases: &[PhaseSample],
    cond: Option<&TbCondition<T>>,
    h: usize,
    w: usize,
) -> Var<T> {
    let n = phases.len();
    let (p, c) = (tb.textons.shape()[0], tb.textons.shape()[1]);
    let maps = broadcast_maps(tb, phases, cond, h, w).reshape(&[n, p, h * w]);
    let v = tb.textons.reshape(&[1, p, c]).broadcast_to(&[n, p, c]);
    v.matmul_t(&maps, true, false).reshape(&[n, c, h, w])
}
