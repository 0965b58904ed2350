//! Self-similarity analysis of feature networks built from hidden-layer
//! activations.

pub mod boxcover;
pub mod embed;
pub mod error;
pub mod featnet;
pub mod fractal;
pub mod invariance;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod selfcheck;
pub mod trainer;

pub use error::{Error, Result};
