//! Separable fixed linear resampling on the two trailing axes. Each op's
//! gradient is its adjoint, which is again a resampling op.

use std::rc::Rc;

use crate::float::Float;
use crate::var::{Backward, BackwardCtx, Var};

/// Sparse 1-d linear map: `out[j] = sum(w * x[i] for (i, w) in taps[j])`.
#[derive(Debug)]
struct Lin1d {
    n_in: usize,
    taps: Vec<Vec<(usize, f64)>>,
}

impl Lin1d {
    fn n_out(&self) -> usize {
        self.taps.len()
    }

    /// Half-pixel bilinear x2 upsampling with edge clamping.
    fn bilinear_up2(n: usize) -> Self {
        let mut taps = Vec::with_capacity(2 * n);
        for i in 0..n {
            taps.push(vec![(i.saturating_sub(1), 0.25), (i, 0.75)]);
            taps.push(vec![(i, 0.75), ((i + 1).min(n - 1), 0.25)]);
        }
        Lin1d { n_in: n, taps }
    }

    fn avg_pool2(n: usize) -> Self {
        assert!(n % 2 == 0, "avg_pool2 needs an even extent, got {n}");
        let taps = (0..n / 2).map(|j| vec![(2 * j, 0.5), (2 * j + 1, 0.5)]).collect();
        Lin1d { n_in: n, taps }
    }

    fn nearest_up2(n: usize) -> Self {
        let taps = (0..2 * n).map(|j| vec![(j / 2, 1.0)]).collect();
        Lin1d { n_in: n, taps }
    }
}

struct Resample {
    h: Rc<Lin1d>,
    w: Rc<Lin1d>,
    adjoint: bool,
}

impl Resample {
    fn dims(&self) -> ((usize, usize), (usize, usize)) {
        let (hi, ho) = (self.h.n_in, self.h.n_out());
        let (wi, wo) = (self.w.n_in, self.w.n_out());
        if self.adjoint {
            ((ho, wo), (hi, wi))
        } else {
            ((hi, wi), (ho, wo))
        }
    }

    fn apply<T: Float>(&self, x: &Var<T>) -> Var<T> {
        let shape = x.shape();
        let nd = shape.len();
        assert!(nd >= 2);
        let ((hin, win), (hout, wout)) = self.dims();
        assert_eq!((shape[nd - 2], shape[nd - 1]), (hin, win), "resample input extent mismatch");
        let planes: usize = shape[..nd - 2].iter().product();
        let src = x.data();
        let mut out = vec![T::zero(); planes * hout * wout];
        let mut tmp = vec![T::zero(); hin * wout];
        for p in 0..planes {
            let plane = &src[p * hin * win..(p + 1) * hin * win];
            // width pass: [hin, win] -> [hin, wout]
            tmp.iter_mut().for_each(|v| *v = T::zero());
            for r in 0..hin {
                let row = &plane[r * win..(r + 1) * win];
                let dst = &mut tmp[r * wout..(r + 1) * wout];
                apply_1d(&self.w, self.adjoint, row, dst);
            }
            // height pass on columns: [hin, wout] -> [hout, wout]
            let dst = &mut out[p * hout * wout..(p + 1) * hout * wout];
            for (j, taps) in self.h.taps.iter().enumerate() {
                for &(i, wt) in taps {
                    let wt = T::of(wt);
                    let (orow, irow) = if self.adjoint { (i, j) } else { (j, i) };
                    for c in 0..wout {
                        dst[orow * wout + c] = dst[orow * wout + c] + wt * tmp[irow * wout + c];
                    }
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[nd - 2] = hout;
        out_shape[nd - 1] = wout;
        let op = Resample { h: Rc::clone(&self.h), w: Rc::clone(&self.w), adjoint: self.adjoint };
        Var::from_op(out, out_shape, op, vec![x.clone()])
    }
}

fn apply_1d<T: Float>(lin: &Lin1d, adjoint: bool, src: &[T], dst: &mut [T]) {
    for (j, taps) in lin.taps.iter().enumerate() {
        for &(i, wt) in taps {
            let wt = T::of(wt);
            if adjoint {
                dst[i] = dst[i] + wt * src[j];
            } else {
                dst[j] = dst[j] + wt * src[i];
            }
        }
    }
}

impl<T: Float> Backward<T> for Resample {
    fn name(&self) -> &'static str {
        "resample"
    }
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        let adj = Resample { h: Rc::clone(&self.h), w: Rc::clone(&self.w), adjoint: !self.adjoint };
        vec![Some(adj.apply(ctx.grad))]
    }
}

impl<T: Float> Var<T> {
    fn trailing_hw(&self) -> (usize, usize) {
        let nd = self.ndim();
        assert!(nd >= 2, "resampling needs at least 2 axes");
        (self.shape()[nd - 2], self.shape()[nd - 1])
    }

    /// Bilinear x2 upsampling of the two trailing axes (edge-clamped).
    pub fn upsample_bilinear2(&self) -> Var<T> {
        let (h, w) = self.trailing_hw();
        let op = Resample {
            h: Rc::new(Lin1d::bilinear_up2(h)),
            w: Rc::new(Lin1d::bilinear_up2(w)),
            adjoint: false,
        };
        op.apply(self)
    }

    pub fn upsample_nearest2(&self) -> Var<T> {
        let (h, w) = self.trailing_hw();
        let op =
            Resample { h: Rc::new(Lin1d::nearest_up2(h)), w: Rc::new(Lin1d::nearest_up2(w)), adjoint: false };
        op.apply(self)
    }

    /// 2x2 mean pooling of the two trailing axes.
    pub fn avg_pool2(&self) -> Var<T> {
        let (h, w) = self.trailing_hw();
        let op = Resample { h: Rc::new(Lin1d::avg_pool2(h)), w: Rc::new(Lin1d::avg_pool2(w)), adjoint: false };
        op.apply(self)
    }
}
