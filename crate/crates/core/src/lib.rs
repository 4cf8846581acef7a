//! Texture synthesis with a style-based generator whose feature maps are fed
//! by texton broadcasting: learned texton vectors spread over the plane by
//! sinusoids with a random phase. Trained as a WGAN-GP on random crops.
//!
//! [`texton`] holds the broadcasting module, [`generator`] and [`critic`] the
//! networks, [`training`] the loop and [`checkpoint`] its persistence.
//! [`metrics`] covers σ-maps, TIPP, FID and Gram distances; [`inversion`]
//! finds style vectors for target textures. [`cli`] backs the `texgen` binary.

pub mod critic;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod generator;
pub mod image_io;
pub mod inversion;
pub mod metrics;
mod nn;
pub mod params;
pub mod rng;
pub mod texton;
pub mod training;

pub use error::{Error, Result};
