//! Equalized-learning-rate layers shared by the generator and the critic.

use autodiff::Var;

use crate::params::{Bound, ParamId, ParamSet, Tensor};
use crate::rng::RngStream;

pub(crate) const LRELU_SLOPE: f64 = 0.2;

/// Leaky ReLU with the √2 gain that keeps activations at unit scale.
pub(crate) fn lrelu(x: &Var<f32>) -> Var<f32> {
    x.leaky_relu(LRELU_SLOPE).scale(std::f64::consts::SQRT_2)
}

pub(crate) fn pixel_norm(z: &Var<f32>) -> Var<f32> {
    z * &z.square().mean_keepdim(&[1]).add_scalar(1e-8).rsqrt()
}

/// Per-channel bias on an NCHW map.
pub(crate) fn add_bias(x: &Var<f32>, b: &Var<f32>) -> Var<f32> {
    x + &b.reshape(&[1, b.numel(), 1, 1])
}

fn normal_tensor(shape: &[usize], std: f64, rng: &mut RngStream) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, rng.normal_vec(n).into_iter().map(|v| v * std as f32).collect())
}

#[derive(Clone, Debug)]
pub(crate) struct Linear {
    w: ParamId,
    b: ParamId,
    scale: f64,
    lr_mul: f64,
}

impl Linear {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        lr_mul: f64,
        bias_init: f32,
        rng: &mut RngStream,
    ) -> Self {
        let w = ps.add(format!("{name}.weight"), normal_tensor(&[fan_out, fan_in], 1.0 / lr_mul, rng));
        let b = ps.add(format!("{name}.bias"), Tensor::new(&[fan_out], vec![bias_init / lr_mul as f32; fan_out]));
        Linear { w, b, scale: lr_mul / (fan_in as f64).sqrt(), lr_mul }
    }

    /// `[N, in] -> [N, out]`.
    pub fn forward(&self, p: &Bound, x: &Var<f32>) -> Var<f32> {
        let y = x.matmul_t(p.get(self.w), false, true).scale(self.scale);
        let out = y.shape()[1];
        y + p.get(self.b).scale(self.lr_mul).reshape(&[1, out])
    }
}

/// Plain equalized convolution with bias.
#[derive(Clone, Debug)]
pub(crate) struct Conv {
    w: ParamId,
    b: ParamId,
    scale: f64,
    pad: usize,
}

impl Conv {
    pub fn new(ps: &mut ParamSet, name: &str, cin: usize, cout: usize, k: usize, rng: &mut RngStream) -> Self {
        let w = ps.add(format!("{name}.weight"), normal_tensor(&[cout, cin, k, k], 1.0, rng));
        let b = ps.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Conv { w, b, scale: 1.0 / ((cin * k * k) as f64).sqrt(), pad: k / 2 }
    }

    pub fn forward(&self, p: &Bound, x: &Var<f32>) -> Var<f32> {
        add_bias(&x.conv2d(p.get(self.w), self.pad).scale(self.scale), p.get(self.b))
    }
}

/// Style-modulated convolution. Modulating the input channels by `s` and
/// convolving is the same as convolving with per-sample modulated weights;
/// demodulation then rescales every output channel to unit expected norm.
#[derive(Clone, Debug)]
pub(crate) struct ModConv {
    w: ParamId,
    affine: Linear,
    scale: f64,
    pad: usize,
    demodulate: bool,
}

impl ModConv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        style_dim: usize,
        cin: usize,
        cout: usize,
        k: usize,
        demodulate: bool,
        rng: &mut RngStream,
    ) -> Self {
        let affine = Linear::new(ps, &format!("{name}.affine"), style_dim, cin, 1.0, 1.0, rng);
        let w = ps.add(format!("{name}.weight"), normal_tensor(&[cout, cin, k, k], 1.0, rng));
        ModConv { w, affine, scale: 1.0 / ((cin * k * k) as f64).sqrt(), pad: k / 2, demodulate }
    }

    /// `x: [N, Cin, H, W]`, `style: [N, D]`.
    pub fn forward(&self, p: &Bound, x: &Var<f32>, style: &Var<f32>) -> Var<f32> {
        let n = x.shape()[0];
        let cin = x.shape()[1];
        let s = self.affine.forward(p, style);
        let w = p.get(self.w).scale(self.scale);
        let y = (x * &s.reshape(&[n, cin, 1, 1])).conv2d(&w, self.pad);
        if !self.demodulate {
            return y;
        }
        let cout = w.shape()[0];
        // Σ_k w[o,i,k]^2 s[n,i]^2 for every (n, o)
        let w2 = w.square().sum_axes(&[2, 3]);
        let d = s.square().matmul_t(&w2, false, true).add_scalar(1e-8).rsqrt();
        y * d.reshape(&[n, cout, 1, 1])
    }
}

/// Scalar-gain spatial noise, gain initialized to zero.
#[derive(Clone, Debug)]
pub(crate) struct NoiseInjection {
    gain: ParamId,
}

impl NoiseInjection {
    pub fn new(ps: &mut ParamSet, name: &str) -> Self {
        NoiseInjection { gain: ps.add(format!("{name}.noise_gain"), Tensor::zeros(&[1])) }
    }

    pub fn gain_id(&self) -> ParamId {
        self.gain
    }

    /// `noise: [N, 1, H, W]`.
    pub fn forward(&self, p: &Bound, x: &Var<f32>, noise: &Var<f32>) -> Var<f32> {
        x + &(noise * &p.get(self.gain).reshape(&[1, 1, 1, 1]))
    }
}
