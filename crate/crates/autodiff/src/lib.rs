//! Reverse-mode automatic differentiation over dense row-major tensors.
//!
//! Graphs are built eagerly as operations run. Every backward rule is written
//! in terms of differentiable ops, so [`grad`] with `create_graph = true`
//! returns gradients that can be differentiated again (as the WGAN-GP penalty
//! requires). Without `create_graph` the backward pass records nothing.
//!
//! ```
//! use autodiff::{grad, Var};
//!
//! let x = Var::<f64>::param(vec![3.0], &[1]);
//! let y = x.square().sum_all();
//! let dx = &grad(&y, &[&x], true)[0];
//! assert_eq!(dx.item(), 6.0);
//! let ddx = &grad(&dx.sum_all(), &[&x], false)[0];
//! assert_eq!(ddx.item(), 2.0);
//! ```

mod float;
mod ops;
mod var;

pub use float::Float;
pub use var::{grad, grad_with_seed, Var};
