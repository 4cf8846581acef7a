use crate::float::{matmul_into, Float};
use crate::var::{Backward, BackwardCtx, Var};

/// `op(a) @ op(b)` for 2-d operands or equal-batch 3-d operands.
struct MatMul {
    ta: bool,
    tb: bool,
}

impl<T: Float> Backward<T> for MatMul {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        let (a, b, g) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad);
        let (ga, gb) = match (self.ta, self.tb) {
            (false, false) => (
                ctx.needs(0).then(|| g.matmul_t(b, false, true)),
                ctx.needs(1).then(|| a.matmul_t(g, true, false)),
            ),
            (true, false) => (
                ctx.needs(0).then(|| b.matmul_t(g, false, true)),
                ctx.needs(1).then(|| a.matmul_t(g, false, false)),
            ),
            (false, true) => (
                ctx.needs(0).then(|| g.matmul_t(b, false, false)),
                ctx.needs(1).then(|| g.matmul_t(a, true, false)),
            ),
            (true, true) => (
                ctx.needs(0).then(|| b.matmul_t(g, true, true)),
                ctx.needs(1).then(|| g.matmul_t(a, true, true)),
            ),
        };
        vec![ga, gb]
    }
}

fn dims(shape: &[usize], trans: bool) -> (usize, usize, usize) {
    let (batch, r, c) = match shape.len() {
        2 => (1, shape[0], shape[1]),
        3 => (shape[0], shape[1], shape[2]),
        _ => panic!("matmul expects 2-d or 3-d operands, got {shape:?}"),
    };
    if trans {
        (batch, c, r)
    } else {
        (batch, r, c)
    }
}

impl<T: Float> Var<T> {
    pub fn matmul(&self, other: &Var<T>) -> Var<T> {
        self.matmul_t(other, false, false)
    }

    /// Matrix product with either operand read transposed (last two axes).
    pub fn matmul_t(&self, other: &Var<T>, trans_a: bool, trans_b: bool) -> Var<T> {
        assert_eq!(self.ndim(), other.ndim(), "matmul rank mismatch");
        let (ba, m, k) = dims(self.shape(), trans_a);
        let (bb, k2, n) = dims(other.shape(), trans_b);
        assert_eq!(k, k2, "matmul inner dims {:?} x {:?}", self.shape(), other.shape());
        assert_eq!(ba, bb, "matmul batch mismatch");
        let mut data = vec![T::zero(); ba * m * n];
        let (sa, sb, sc) = (m * k, k * n, m * n);
        for i in 0..ba {
            matmul_into(
                &self.data()[i * sa..(i + 1) * sa],
                trans_a,
                &other.data()[i * sb..(i + 1) * sb],
                trans_b,
                &mut data[i * sc..(i + 1) * sc],
                m,
                k,
                n,
                false,
            );
        }
        let shape = if self.ndim() == 2 { vec![m, n] } else { vec![ba, m, n] };
        Var::from_op(data, shape, MatMul { ta: trans_a, tb: trans_b }, vec![self.clone(), other.clone()])
    }
}
