//! Named parameter storage, binding to autodiff leaves, and the Adam optimizer.

use autodiff::Var;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Owned dense `f32` tensor, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f32>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor data/shape mismatch");
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::new(shape, vec![0.0; shape.iter().product()])
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn to_var(&self) -> Var<f32> {
        Var::constant(self.data.clone(), &self.shape)
    }

    pub fn from_var(v: &Var<f32>) -> Self {
        Tensor { shape: v.shape().to_vec(), data: v.to_vec() }
    }
}

/// Index of a parameter inside its [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Leaves that gradients can be taken against.
    pub fn bind(&self) -> Bound {
        Bound { vars: self.tensors.iter().map(|t| Var::param(t.data.clone(), &t.shape)).collect() }
    }

    /// Constant leaves, for forward passes that must not update these params.
    pub fn bind_frozen(&self) -> Bound {
        Bound { vars: self.tensors.iter().map(Tensor::to_var).collect() }
    }

    /// Same names and shapes, in the same order.
    pub fn same_structure(&self, other: &ParamSet) -> bool {
        self.names == other.names
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.shape == b.shape)
    }

    pub fn check_structure(&self, other: &ParamSet, what: &str) -> Result<()> {
        if self.same_structure(other) {
            return Ok(());
        }
        let detail = self
            .names
            .iter()
            .zip(&other.names)
            .zip(self.tensors.iter().zip(&other.tensors))
            .find(|((a, b), (ta, tb))| a != b || ta.shape != tb.shape)
            .map(|((a, b), (ta, tb))| format!("`{a}` {:?} vs `{b}` {:?}", ta.shape, tb.shape))
            .unwrap_or_else(|| format!("{} vs {} tensors", self.len(), other.len()));
        Err(Error::StructureMismatch(format!("{what}: {detail}")))
    }

    /// SHA-256 over names, shapes and raw values.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (name, t) in self.iter() {
            h.update(name.as_bytes());
            for &d in &t.shape {
                h.update((d as u64).to_le_bytes());
            }
            for &v in &t.data {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn from_parts(names: Vec<String>, tensors: Vec<Tensor>) -> Self {
        ParamSet { names, tensors }
    }
}

/// A [`ParamSet`] materialized as graph leaves for one forward/backward pass.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var<f32>>,
}

impl Bound {
    pub fn get(&self, id: ParamId) -> &Var<f32> {
        &self.vars[id.0]
    }

    pub fn refs(&self) -> Vec<&Var<f32>> {
        self.vars.iter().collect()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    /// The library defaults `(0.9, 0.999, 1e-8)`.
    pub fn standard(learning_rate: f64) -> Self {
        AdamConfig { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment buffers plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ParamSet,
    pub v: ParamSet,
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros = |p: &ParamSet| {
            ParamSet::from_parts(
                p.names.clone(),
                p.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect(),
            )
        };
        Adam { config, state: AdamState { step: 0, m: zeros(params), v: zeros(params) } }
    }

    /// One update from gradients aligned with `params`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Var<f32>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::StructureMismatch(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        if grads.iter().any(|g| g.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        let c = self.config;
        self.state.step += 1;
        let t = self.state.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let lr = (c.learning_rate * bc2.sqrt() / bc1) as f32;
        let (b1, b2, eps) = (c.beta1 as f32, c.beta2 as f32, c.epsilon as f32);
        let eps_hat = eps * (bc2.sqrt() as f32);
        for (i, g) in grads.iter().enumerate() {
            let p = &mut params.tensors[i];
            let m = &mut self.state.m.tensors[i];
            let v = &mut self.state.v.tensors[i];
            for (((pv, mv), vv), &gv) in p.data.iter_mut().zip(&mut m.data).zip(&mut v.data).zip(g.data()) {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                *pv -= lr * *mv / (vv.sqrt() + eps_hat);
            }
        }
        Ok(())
    }
}
