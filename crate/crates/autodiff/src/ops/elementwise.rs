use std::ops::{Add, Div, Mul, Neg, Sub};

use super::broadcast::{broadcast_shape, broadcast_strides, for_each_offset};
use crate::float::Float;
use crate::var::{Backward, BackwardCtx, Var};

fn binary_kernel<T: Float>(a: &Var<T>, b: &Var<T>, f: impl Fn(T, T) -> T) -> (Vec<T>, Vec<usize>) {
    let (ad, bd) = (a.data(), b.data());
    if a.shape() == b.shape() {
        return (ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(), a.shape().to_vec());
    }
    let out = broadcast_shape(a.shape(), b.shape());
    if b.numel() == 1 && out == a.shape() {
        let y = bd[0];
        return (ad.iter().map(|&x| f(x, y)).collect(), out);
    }
    if a.numel() == 1 && out == b.shape() {
        let x = ad[0];
        return (bd.iter().map(|&y| f(x, y)).collect(), out);
    }
    let sa = broadcast_strides(a.shape(), &out);
    let sb = broadcast_strides(b.shape(), &out);
    let mut v = vec![T::zero(); out.iter().product()];
    for_each_offset(&out, [&sa, &sb], |o, [i, j]| v[o] = f(ad[i], bd[j]));
    (v, out)
}

#[derive(Clone, Copy)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

struct Binary {
    kind: BinaryKind,
}

impl<T: Float> Backward<T> for Binary {
    fn name(&self) -> &'static str {
        match self.kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        }
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        let (a, b, g) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad);
        let (ga, gb) = match self.kind {
            BinaryKind::Add => (g.clone(), g.clone()),
            BinaryKind::Sub => (g.clone(), -g),
            BinaryKind::Mul => (g * b, g * a),
            BinaryKind::Div => {
                let ga = g / b;
                let gb = -(&(&ga * ctx.output));
                (ga, gb)
            }
        };
        let ga = ctx.needs(0).then(|| ga.sum_to(a.shape()));
        let gb = ctx.needs(1).then(|| gb.sum_to(b.shape()));
        vec![ga, gb]
    }
}

fn binary<T: Float>(a: &Var<T>, b: &Var<T>, kind: BinaryKind) -> Var<T> {
    let (data, shape) = match kind {
        BinaryKind::Add => binary_kernel(a, b, |x, y| x + y),
        BinaryKind::Sub => binary_kernel(a, b, |x, y| x - y),
        BinaryKind::Mul => binary_kernel(a, b, |x, y| x * y),
        BinaryKind::Div => binary_kernel(a, b, |x, y| x / y),
    };
    Var::from_op(data, shape, Binary { kind }, vec![a.clone(), b.clone()])
}

#[derive(Clone, Copy, Debug)]
enum UnaryKind {
    Neg,
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
    Square,
    Sigmoid,
    Tanh,
    Abs,
    Scale(f64),
    AddScalar(f64),
    Powf(f64),
}

struct Unary {
    kind: UnaryKind,
}

impl<T: Float> Backward<T> for Unary {
    fn name(&self) -> &'static str {
        match self.kind {
            UnaryKind::Neg => "neg",
            UnaryKind::Exp => "exp",
            UnaryKind::Ln => "ln",
            UnaryKind::Sin => "sin",
            UnaryKind::Cos => "cos",
            UnaryKind::Sqrt => "sqrt",
            UnaryKind::Square => "square",
            UnaryKind::Sigmoid => "sigmoid",
            UnaryKind::Tanh => "tanh",
            UnaryKind::Abs => "abs",
            UnaryKind::Scale(_) => "scale",
            UnaryKind::AddScalar(_) => "add_scalar",
            UnaryKind::Powf(_) => "powf",
        }
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        let (x, y, g) = (&ctx.inputs[0], ctx.output, ctx.grad);
        let gx = match self.kind {
            UnaryKind::Neg => -g,
            UnaryKind::Exp => g * y,
            UnaryKind::Ln => g / x,
            UnaryKind::Sin => g * &x.cos(),
            UnaryKind::Cos => -(&(g * &x.sin())),
            UnaryKind::Sqrt => &g.scale(0.5) / y,
            UnaryKind::Square => &g.scale(2.0) * x,
            UnaryKind::Sigmoid => g * &(y * &y.neg().add_scalar(1.0)),
            UnaryKind::Tanh => g * &y.square().neg().add_scalar(1.0),
            UnaryKind::Abs => {
                let sign: Vec<T> = x.data().iter().map(|&v| v.signum()).collect();
                g * &Var::constant(sign, x.shape())
            }
            UnaryKind::Scale(s) => g.scale(s),
            UnaryKind::AddScalar(_) => g.clone(),
            UnaryKind::Powf(p) => &g.scale(p) * &x.powf(p - 1.0),
        };
        vec![Some(gx)]
    }
}

fn unary<T: Float>(x: &Var<T>, kind: UnaryKind) -> Var<T> {
    let f: Box<dyn Fn(T) -> T> = match kind {
        UnaryKind::Neg => Box::new(|v: T| -v),
        UnaryKind::Exp => Box::new(|v: T| v.exp()),
        UnaryKind::Ln => Box::new(|v: T| v.ln()),
        UnaryKind::Sin => Box::new(|v: T| v.sin()),
        UnaryKind::Cos => Box::new(|v: T| v.cos()),
        UnaryKind::Sqrt => Box::new(|v: T| v.sqrt()),
        UnaryKind::Square => Box::new(|v: T| v * v),
        UnaryKind::Sigmoid => Box::new(|v: T| {
            // branch keeps exp() from overflowing on either tail
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        }),
        UnaryKind::Tanh => Box::new(|v: T| v.tanh()),
        UnaryKind::Abs => Box::new(|v: T| v.abs()),
        UnaryKind::Scale(s) => {
            let s = T::of(s);
            Box::new(move |v: T| v * s)
        }
        UnaryKind::AddScalar(s) => {
            let s = T::of(s);
            Box::new(move |v: T| v + s)
        }
        UnaryKind::Powf(p) => {
            let p = T::of(p);
            Box::new(move |v: T| v.powf(p))
        }
    };
    let data = x.data().iter().map(|&v| f(v)).collect();
    Var::from_op(data, x.shape().to_vec(), Unary { kind }, vec![x.clone()])
}

struct LeakyRelu {
    slope: f64,
}

impl<T: Float> Backward<T> for LeakyRelu {
    fn name(&self) -> &'static str {
        "leaky_relu"
    }
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>> {
        let x = &ctx.inputs[0];
        let slope = T::of(self.slope);
        let mask: Vec<T> = x.data().iter().map(|&v| if v > T::zero() { T::one() } else { slope }).collect();
        vec![Some(ctx.grad * &Var::constant(mask, x.shape()))]
    }
}

impl<T: Float> Var<T> {
    pub fn add(&self, other: &Var<T>) -> Var<T> {
        binary(self, other, BinaryKind::Add)
    }
    pub fn sub(&self, other: &Var<T>) -> Var<T> {
        binary(self, other, BinaryKind::Sub)
    }
    pub fn mul(&self, other: &Var<T>) -> Var<T> {
        binary(self, other, BinaryKind::Mul)
    }
    pub fn div(&self, other: &Var<T>) -> Var<T> {
        binary(self, other, BinaryKind::Div)
    }
    pub fn neg(&self) -> Var<T> {
        unary(self, UnaryKind::Neg)
    }
    pub fn exp(&self) -> Var<T> {
        unary(self, UnaryKind::Exp)
    }
    pub fn ln(&self) -> Var<T> {
        unary(self, UnaryKind::Ln)
    }
    pub fn sin(&self) -> Var<T> {
        unary(self, UnaryKind::Sin)
    }
    pub fn cos(&self) -> Var<T> {
        unary(self, UnaryKind::Cos)
    }
    pub fn sqrt(&self) -> Var<T> {
        unary(self, UnaryKind::Sqrt)
    }
    pub fn square(&self) -> Var<T> {
        unary(self, UnaryKind::Square)
    }
    pub fn sigmoid(&self) -> Var<T> {
        unary(self, UnaryKind::Sigmoid)
    }
    pub fn tanh(&self) -> Var<T> {
        unary(self, UnaryKind::Tanh)
    }
    pub fn abs(&self) -> Var<T> {
        unary(self, UnaryKind::Abs)
    }
    pub fn scale(&self, s: f64) -> Var<T> {
        unary(self, UnaryKind::Scale(s))
    }
    pub fn add_scalar(&self, s: f64) -> Var<T> {
        unary(self, UnaryKind::AddScalar(s))
    }
    pub fn powf(&self, p: f64) -> Var<T> {
        unary(self, UnaryKind::Powf(p))
    }
    /// `1 / sqrt(x)`.
    pub fn rsqrt(&self) -> Var<T> {
        self.powf(-0.5)
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<T> {
        let s = T::of(slope);
        let data = self.data().iter().map(|&v| if v > T::zero() { v } else { v * s }).collect();
        Var::from_op(data, self.shape().to_vec(), LeakyRelu { slope }, vec![self.clone()])
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $kind:expr) => {
        impl<T: Float> $trait<&Var<T>> for &Var<T> {
            type Output = Var<T>;
            fn $method(self, rhs: &Var<T>) -> Var<T> {
                binary(self, rhs, $kind)
            }
        }
        impl<T: Float> $trait<Var<T>> for Var<T> {
            type Output = Var<T>;
            fn $method(self, rhs: Var<T>) -> Var<T> {
                binary(&self, &rhs, $kind)
            }
        }
        impl<T: Float> $trait<&Var<T>> for Var<T> {
            type Output = Var<T>;
            fn $method(self, rhs: &Var<T>) -> Var<T> {
                binary(&self, rhs, $kind)
            }
        }
        impl<T: Float> $trait<Var<T>> for &Var<T> {
            type Output = Var<T>;
            fn $method(self, rhs: Var<T>) -> Var<T> {
                binary(self, &rhs, $kind)
            }
        }
    };
}

impl_binop!(Add, add, BinaryKind::Add);
impl_binop!(Sub, sub, BinaryKind::Sub);
impl_binop!(Mul, mul, BinaryKind::Mul);
impl_binop!(Div, div, BinaryKind::Div);

impl<T: Float> Neg for &Var<T> {
    type Output = Var<T>;
    fn neg(self) -> Var<T> {
        unary(self, UnaryKind::Neg)
    }
}

impl<T: Float> Neg for Var<T> {
    type Output = Var<T>;
    fn neg(self) -> Var<T> {
        unary(&self, UnaryKind::Neg)
    }
}
