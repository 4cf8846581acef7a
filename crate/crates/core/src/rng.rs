//! Explicitly seeded random streams with serializable state.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// A ChaCha8 stream. Every stochastic operation in the crate takes one of
/// these by `&mut`, so results are a pure function of the seed.
#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

/// Resumable position of an [`RngStream`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent child stream keyed by `label`; the parent advances by one draw.
    pub fn fork(&mut self, label: u64) -> Self {
        let base = self.inner.next_u64();
        let mut inner = ChaCha8Rng::seed_from_u64(base ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        inner.set_stream(label);
        RngStream { inner }
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.inner.get_seed(),
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: &RngState) -> Self {
        let mut inner = ChaCha8Rng::from_seed(state.seed);
        inner.set_stream(state.stream);
        inner.set_word_pos(state.word_pos);
        RngStream { inner }
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f32> {
        (0..n).map(|_| self.normal() as f32).collect()
    }

    /// `k` distinct indices from `0..n`, uniformly at random.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
