//! Stride-1 zero-padded 2-d convolution (NCHW, OIHW) and the two adjoint ops
//! needed to express its gradients. The three ops close under differentiation,
//! so gradients of gradients come for free.

use crate::float::{matmul_into, Float};
use crate::var::{Backward, BackwardCtx, Var};

#[derive(Clone, Copy, Debug)]
struct Geom {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn new(cin: usize, h: usize, w: usize, k: usize, pad: usize) -> Self {
        assert!(h + 2 * pad >= k && w + 2 * pad >= k, "kernel {k} larger than padded input {h}x{w}");
        Geom { cin, h, w, k, pad, ho: h + 2 * pad - k + 1, wo: w + 2 * pad - k + 1 }
    }
    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }
    fn cols(&self) -> usize {
        self.ho * self.wo
    }
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.pad == 0
    }
}

/// Output columns `ox` whose input column `ox + kj - pad` lies inside `0..w`.
fn valid_span(g: &Geom, kj: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).min(g.wo);
    let hi = (g.w + g.pad).saturating_sub(kj).min(g.wo).max(lo);
    (lo, hi)
}

fn im2col<T: Float>(x: &[T], g: &Geom, col: &mut [T]) {
    let (k, pad) = (g.k, g.pad as isize);
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut col[row * g.cols()..(row + 1) * g.cols()];
                let (lo, hi) = valid_span(g, kj);
                for oy in 0..g.ho {
                    let iy = oy as isize + ki as isize - pad;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    line[..lo].fill(T::zero());
                    line[hi..].fill(T::zero());
                    if hi > lo {
                        let s0 = lo + kj - g.pad;
                        line[lo..hi].copy_from_slice(&src[s0..s0 + hi - lo]);
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Float>(col: &[T], g: &Geom, x: &mut [T]) {
    let (k, pad) = (g.k, g.pad as isize);
    for c in 0..g.cin {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &col[row * g.cols()..(row + 1) * g.cols()];
                let (lo, hi) = valid_span(g, kj);
                if hi == lo {
                    continue;
                }
                let s0 = lo + kj - g.pad;
                for oy in 0..g.ho {
                    let iy = oy as isize + ki as isize - pad;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w + s0..iy as usize * g.w + s0 + hi - lo];
                    for (d, &v) in dst.iter_mut().zip(&src[oy * g.wo + lo..oy * g.wo + hi]) {
                        *d = *d + v;
                    }
                }
            }
        }
    }
}

/// Runs `f(n, col_n)` with the im2col matrix of every batch element.
fn with_cols<T: Float>(x: &[T], n: usize, g: &Geom, mut f: impl FnMut(usize, &[T])) {
    let per = g.cin * g.h * g.w;
    if g.is_pointwise() {
        for i in 0..n {
            f(i, &x[i * per..(i + 1) * per]);
        }
        return;
    }
    let mut col = vec![T::zero(); g.rows() * g.cols()];
    for i in 0..n {
        im2col(&x[i * per..(i + 1) * per], g, &mut col);
        f(i, &col);
    }
}

fn conv_forward<T: Float>(x: &[T], w: &[T], n: usize, cout: usize, g: &Geom) -> Vec<T> {
    let out_per = cout * g.cols();
    let mut out = vec![T::zero(); n * out_per];
    with_cols(x, n, g, |i, col| {
        matmul_into(w, false, col, false, &mut out[i * out_per..(i + 1) * out_per], cout, g.rows(), g.cols(), false);
    });
    out
}

fn conv_input_grad<T: Float>(gy: &[T], w: &[T], n: usize, cout: usize, g: &Geom) -> Vec<T> {
    let per = g.cin * g.h * g.w;
    let out_per = cout * g.cols();
    let mut dx = vec![T::zero(); n * per];
    if g.is_pointwise() {
        for i in 0..n {
            matmul_into(w, true, &gy[i * out_per..(i + 1) * out_per], false, &mut dx[i * per..(i + 1) * per], g.rows(), cout, g.cols(), false);
        }
        return dx;
    }
    let mut col = vec![T::zero(); g.rows() * g.cols()];
    for i in 0..n {
        matmul_into(w, true, &gy[i * out_per..(i + 1) * out_per], false, &mut col, g.rows(), cout, g.cols(), false);
        col2im_add(&col, g, &mut dx[i * per..(i + 1) * per]);
    }
    dx
}

fn conv_weight_grad<T: Float>(x: &[T], gy: &[T], n: usize, cout: usize, g: &Geom) -> Vec<T> {
    let out_per = cout * g.cols();
    let mut dw = vec![T::zero(); cout * g.rows()];
    with_cols(x, n, g, |i, col| {
        matmul_into(&gy[i * out_per..(i + 1) * out_per], false, col, true, &mut dw, cout, g.cols(), g.rows(), true);
    });
    dw
}

struct Conv2d {
    geom: Geom,
}

struct Conv2dInputGrad {
    geom: Geom,
}

struct Conv2dWeightGrad {
    geom: Geom,
}

impl<T: Float> Backward<T> for Conv2d {
    fn name(&self) -> &'static str {
        "conv2d"
    }
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        let (x, w, g) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad);
        vec![
            ctx.needs(0).then(|| conv2d_input_grad(g, w, self.geom)),
            ctx.needs(1).then(|| conv2d_weight_grad(x, g, self.geom)),
        ]
    }
}

impl<T: Float> Backward<T> for Conv2dInputGrad {
    fn name(&self) -> &'static str {
        "conv2d_input_grad"
    }
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        // y = A(gy, w) with <A(gy, w), a> = <gy, conv(a, w)>
        let (gy, w, ga) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad);
        vec![
            ctx.needs(0).then(|| ga.conv2d(w, self.geom.pad)),
            ctx.needs(1).then(|| conv2d_weight_grad(ga, gy, self.geom)),
        ]
    }
}

impl<T: Float> Backward<T> for Conv2dWeightGrad {
    fn name(&self) -> &'static str {
        "conv2d_weight_grad"
    }
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        // y = B(x, gy) with <B(x, gy), b> = <gy, conv(x, b)>
        let (x, gy, gw) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad);
        vec![
            ctx.needs(0).then(|| conv2d_input_grad(gy, gw, self.geom)),
            ctx.needs(1).then(|| x.conv2d(gw, self.geom.pad)),
        ]
    }
}

fn conv2d_input_grad<T: Float>(gy: &Var<T>, w: &Var<T>, geom: Geom) -> Var<T> {
    let n = gy.shape()[0];
    let cout = w.shape()[0];
    let data = conv_input_grad(gy.data(), w.data(), n, cout, &geom);
    Var::from_op(data, vec![n, geom.cin, geom.h, geom.w], Conv2dInputGrad { geom }, vec![gy.clone(), w.clone()])
}

fn conv2d_weight_grad<T: Float>(x: &Var<T>, gy: &Var<T>, geom: Geom) -> Var<T> {
    let n = x.shape()[0];
    let cout = gy.shape()[1];
    let data = conv_weight_grad(x.data(), gy.data(), n, cout, &geom);
    Var::from_op(
        data,
        vec![cout, geom.cin, geom.k, geom.k],
        Conv2dWeightGrad { geom },
        vec![x.clone(), gy.clone()],
    )
}

impl<T: Float> Var<T> {
    /// Stride-1 cross-correlation with `pad` zeros on every side.
    /// `self`: `[N, Cin, H, W]`, `weight`: `[Cout, Cin, k, k]`.
    pub fn conv2d(&self, weight: &Var<T>, pad: usize) -> Var<T> {
        let xs = self.shape();
        let ws = weight.shape();
        assert_eq!(xs.len(), 4, "conv2d input must be NCHW, got {xs:?}");
        assert_eq!(ws.len(), 4, "conv2d weight must be OIHW, got {ws:?}");
        assert_eq!(ws[2], ws[3], "square kernels only");
        assert_eq!(xs[1], ws[1], "conv2d channel mismatch: input {xs:?}, weight {ws:?}");
        let geom = Geom::new(xs[1], xs[2], xs[3], ws[2], pad);
        let data = conv_forward(self.data(), weight.data(), xs[0], ws[0], &geom);
        Var::from_op(
            data,
            vec![xs[0], ws[0], geom.ho, geom.wo],
            Conv2d { geom },
            vec![self.clone(), weight.clone()],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(x: &[f64], w: &[f64], n: usize, cout: usize, g: &Geom) -> Vec<f64> {
        let mut out = vec![0.0; n * cout * g.ho * g.wo];
        for b in 0..n {
            for o in 0..cout {
                for oy in 0..g.ho {
                    for ox in 0..g.wo {
                        let mut acc = 0.0;
                        for c in 0..g.cin {
                            for ki in 0..g.k {
                                for kj in 0..g.k {
                                    let (iy, ix) = (oy as isize + ki as isize - g.pad as isize, ox as isize + kj as isize - g.pad as isize);
                                    if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                                        acc += x[((b * g.cin + c) * g.h + iy as usize) * g.w + ix as usize]
                                            * w[((o * g.cin + c) * g.k + ki) * g.k + kj];
                                    }
                                }
                            }
                        }
                        out[((b * cout + o) * g.ho + oy) * g.wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn forward_matches_direct_sum(
            n in 1usize..3, cin in 1usize..3, cout in 1usize..3,
            h in 1usize..7, w in 1usize..7, k in prop::sample::select(vec![1usize, 3]), pad in 0usize..3,
            seed in any::<u64>(),
        ) {
            prop_assume!(h + 2 * pad >= k && w + 2 * pad >= k);
            let g = Geom::new(cin, h, w, k, pad);
            let mut s = seed;
            let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5 };
            let x: Vec<f64> = (0..n * cin * h * w).map(|_| next()).collect();
            let wt: Vec<f64> = (0..cout * cin * k * k).map(|_| next()).collect();
            let fast = conv_forward(&x, &wt, n, cout, &g);
            for (a, b) in fast.iter().zip(naive(&x, &wt, n, cout, &g)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
