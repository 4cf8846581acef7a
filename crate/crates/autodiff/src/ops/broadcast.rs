//! Numpy-style broadcasting helpers shared by the elementwise kernels.

use crate::float::Float;
use crate::var::{numel, Backward, BackwardCtx, Var};

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => panic!("shapes {a:?} and {b:?} are not broadcast-compatible"),
        };
    }
    out
}

/// Strides of `shape` viewed inside `out` (left-padded, zero on broadcast axes).
pub(crate) fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<isize> {
    let n = out.len();
    assert!(shape.len() <= n, "cannot broadcast {shape:?} to {out:?}");
    let mut strides = vec![0isize; n];
    let mut acc = 1isize;
    for i in (0..shape.len()).rev() {
        let oi = i + n - shape.len();
        if shape[i] == out[oi] {
            strides[oi] = if shape[i] == 1 { 0 } else { acc };
        } else {
            assert_eq!(shape[i], 1, "cannot broadcast {shape:?} to {out:?}");
        }
        acc *= shape[i] as isize;
    }
    strides
}

/// Calls `f(out_index, offsets)` for every element of `out`, where `offsets[j]`
/// is the element's linear offset inside operand `j`.
pub(crate) fn for_each_offset<const K: usize>(
    out: &[usize],
    strides: [&[isize]; K],
    mut f: impl FnMut(usize, [usize; K]),
) {
    let total = numel(out);
    if total == 0 {
        return;
    }
    if out.is_empty() {
        f(0, [0; K]);
        return;
    }
    let nd = out.len();
    let inner = out[nd - 1];
    let inner_strides: [isize; K] = std::array::from_fn(|j| strides[j][nd - 1]);
    let mut idx = vec![0usize; nd - 1];
    let mut base = [0isize; K];
    let mut o = 0usize;
    loop {
        let mut offs = base;
        for _ in 0..inner {
            f(o, std::array::from_fn(|j| offs[j] as usize));
            o += 1;
            for j in 0..K {
                offs[j] += inner_strides[j];
            }
        }
        // odometer over the outer axes
        let mut d = nd - 1;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            for j in 0..K {
                base[j] += strides[j][d];
            }
            if idx[d] < out[d] {
                break;
            }
            for j in 0..K {
                base[j] -= strides[j][d] * out[d] as isize;
            }
            idx[d] = 0;
        }
    }
}

pub(crate) fn broadcast_data<T: Float>(data: &[T], shape: &[usize], out: &[usize]) -> Vec<T> {
    if shape == out {
        return data.to_vec();
    }
    let s = broadcast_strides(shape, out);
    let mut v = vec![T::zero(); numel(out)];
    for_each_offset(out, [&s], |o, [a]| v[o] = data[a]);
    v
}

/// Sums `data` (of shape `shape`) down to `target`, the inverse of broadcasting.
pub(crate) fn sum_to_data<T: Float>(data: &[T], shape: &[usize], target: &[usize]) -> Vec<T> {
    if shape == target {
        return data.to_vec();
    }
    let ts = broadcast_strides(target, shape);
    let ident: Vec<isize> = contiguous_strides(shape);
    let mut v = vec![T::zero(); numel(target)];
    for_each_offset(shape, [&ts, &ident], |_, [t, s]| v[t] = v[t] + data[s]);
    v
}

pub(crate) fn contiguous_strides(shape: &[usize]) -> Vec<isize> {
    let mut s = vec![0isize; shape.len()];
    let mut acc = 1isize;
    for i in (0..shape.len()).rev() {
        s[i] = acc;
        acc *= shape[i] as isize;
    }
    s
}

struct BroadcastTo {
    from: Vec<usize>,
}

impl<T: Float> Backward<T> for BroadcastTo {
    fn name(&self) -> &'static str {
        "broadcast_to"
    }
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        vec![Some(ctx.grad.sum_to(&self.from))]
    }
}

struct SumTo {
    from: Vec<usize>,
}

impl<T: Float> Backward<T> for SumTo {
    fn name(&self) -> &'static str {
        "sum_to"
    }
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        vec![Some(ctx.grad.broadcast_to(&self.from))]
    }
}

impl<T: Float> Var<T> {
    pub fn broadcast_to(&self, shape: &[usize]) -> Var<T> {
        if self.shape() == shape {
            return self.clone();
        }
        let data = broadcast_data(self.data(), self.shape(), shape);
        Var::from_op(data, shape.to_vec(), BroadcastTo { from: self.shape().to_vec() }, vec![self.clone()])
    }

    /// Reduces by summation to `shape`, which must broadcast to `self.shape()`.
    pub fn sum_to(&self, shape: &[usize]) -> Var<T> {
        if self.shape() == shape {
            return self.clone();
        }
        let data = sum_to_data(self.data(), self.shape(), shape);
        Var::from_op(data, shape.to_vec(), SumTo { from: self.shape().to_vec() }, vec![self.clone()])
    }
}
