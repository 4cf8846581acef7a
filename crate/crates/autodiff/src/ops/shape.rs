//! Reductions and data-movement ops.

use super::broadcast::contiguous_strides;
use crate::float::Float;
use crate::var::{numel, Backward, BackwardCtx, Var};

struct Reshape {
    from: Vec<usize>,
}

impl<T: Float> Backward<T> for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        vec![Some(ctx.grad.reshape(&self.from))]
    }
}

struct Permute {
    inverse: Vec<usize>,
}

impl<T: Float> Backward<T> for Permute {
    fn name(&self) -> &'static str {
        "permute"
    }
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        vec![Some(ctx.grad.permute(&self.inverse))]
    }
}

struct Narrow {
    axis: usize,
    start: usize,
    full: usize,
}

impl<T: Float> Backward<T> for Narrow {
    fn name(&self) -> &'static str {
        "narrow"
    }
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        vec![Some(ctx.grad.pad_axis(self.axis, self.start, self.full))]
    }
}

struct PadAxis {
    axis: usize,
    start: usize,
    len: usize,
}

impl<T: Float> Backward<T> for PadAxis {
    fn name(&self) -> &'static str {
        "pad_axis"
    }
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        vec![Some(ctx.grad.narrow(self.axis, self.start, self.len))]
    }
}

struct Concat {
    axis: usize,
    sizes: Vec<usize>,
}

impl<T: Float> Backward<T> for Concat {
    fn name(&self) -> &'static str {
        "concat"
    }
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        let mut start = 0;
        self.sizes
            .iter()
            .zip(ctx.inputs)
            .enumerate()
            .map(|(i, (&len, _))| {
                let g = ctx.needs(i).then(|| ctx.grad.narrow(self.axis, start, len));
                start += len;
                g
            })
            .collect()
    }
}

/// (outer, axis, inner) extents around `axis`.
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Float> Var<T> {
    pub fn reshape(&self, shape: &[usize]) -> Var<T> {
        assert_eq!(
            numel(shape),
            self.numel(),
            "cannot reshape {:?} into {:?}",
            self.shape(),
            shape
        );
        if shape == self.shape() {
            return self.clone();
        }
        Var::from_shared_op(
            self.shared_data(),
            shape.to_vec(),
            Reshape { from: self.shape().to_vec() },
            vec![self.clone()],
        )
    }

    pub fn flatten_from(&self, axis: usize) -> Var<T> {
        let mut shape = self.shape()[..axis].to_vec();
        shape.push(self.shape()[axis..].iter().product());
        self.reshape(&shape)
    }

    pub fn permute(&self, axes: &[usize]) -> Var<T> {
        let nd = self.ndim();
        assert_eq!(axes.len(), nd, "permute needs one axis per dimension");
        let mut inverse = vec![usize::MAX; nd];
        for (i, &a) in axes.iter().enumerate() {
            assert!(a < nd && inverse[a] == usize::MAX, "invalid permutation {axes:?}");
            inverse[a] = i;
        }
        if axes.iter().enumerate().all(|(i, &a)| i == a) {
            return self.clone();
        }
        let src_strides = contiguous_strides(self.shape());
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape()[a]).collect();
        let strides: Vec<isize> = axes.iter().map(|&a| src_strides[a]).collect();
        let src = self.data();
        let mut data = vec![T::zero(); self.numel()];
        super::broadcast::for_each_offset(&out_shape, [&strides], |o, [s]| data[o] = src[s]);
        Var::from_op(data, out_shape, Permute { inverse }, vec![self.clone()])
    }

    /// Swaps the last two axes.
    pub fn t(&self) -> Var<T> {
        let nd = self.ndim();
        assert!(nd >= 2);
        let mut axes: Vec<usize> = (0..nd).collect();
        axes.swap(nd - 2, nd - 1);
        self.permute(&axes)
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var<T> {
        let (outer, full, inner) = split_at_axis(self.shape(), axis);
        assert!(start + len <= full, "narrow {start}+{len} out of range {full}");
        if start == 0 && len == full {
            return self.clone();
        }
        let src = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Var::from_op(data, shape, Narrow { axis, start, full }, vec![self.clone()])
    }

    /// Embeds `self` at `start` along `axis` inside a zero tensor of extent `full`.
    pub fn pad_axis(&self, axis: usize, start: usize, full: usize) -> Var<T> {
        let (outer, len, inner) = split_at_axis(self.shape(), axis);
        assert!(start + len <= full);
        let src = self.data();
        let mut data = vec![T::zero(); outer * full * inner];
        for o in 0..outer {
            let dst = o * full * inner + start * inner;
            data[dst..dst + len * inner].copy_from_slice(&src[o * len * inner..(o + 1) * len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = full;
        Var::from_op(data, shape, PadAxis { axis, start, len }, vec![self.clone()])
    }

    pub fn concat(parts: &[Var<T>], axis: usize) -> Var<T> {
        assert!(!parts.is_empty(), "concat of nothing");
        let first = parts[0].shape();
        for p in parts {
            assert_eq!(p.ndim(), first.len());
            for d in 0..first.len() {
                assert!(d == axis || p.shape()[d] == first[d], "concat shape mismatch");
            }
        }
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = sizes.iter().sum();
        let (outer, _, inner) = split_at_axis(first, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &len) in parts.iter().zip(&sizes) {
                data.extend_from_slice(&p.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first.to_vec();
        shape[axis] = total;
        Var::from_op(data, shape, Concat { axis, sizes }, parts.to_vec())
    }

    pub fn sum_all(&self) -> Var<T> {
        self.sum_to(&[])
    }

    pub fn mean_all(&self) -> Var<T> {
        let n = self.numel().max(1);
        self.sum_all().scale(1.0 / n as f64)
    }

    /// Sum over `axes`, keeping them as size-1 dimensions.
    pub fn sum_keepdim(&self, axes: &[usize]) -> Var<T> {
        let mut shape = self.shape().to_vec();
        for &a in axes {
            shape[a] = 1;
        }
        self.sum_to(&shape)
    }

    pub fn mean_keepdim(&self, axes: &[usize]) -> Var<T> {
        let n: usize = axes.iter().map(|&a| self.shape()[a]).product();
        self.sum_keepdim(axes).scale(1.0 / n.max(1) as f64)
    }

    /// Sum over `axes`, dropping them.
    pub fn sum_axes(&self, axes: &[usize]) -> Var<T> {
        let kept: Vec<usize> = self
            .shape()
            .iter()
            .enumerate()
            .filter(|(i, _)| !axes.contains(i))
            .map(|(_, &d)| d)
            .collect();
        self.sum_keepdim(axes).reshape(&kept)
    }

    pub fn mean_axes(&self, axes: &[usize]) -> Var<T> {
        let n: usize = axes.iter().map(|&a| self.shape()[a]).product();
        self.sum_axes(axes).scale(1.0 / n.max(1) as f64)
    }
}
