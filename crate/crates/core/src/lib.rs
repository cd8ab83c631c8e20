//! Spatiotemporal graph convolutions for skeleton motion prediction.
//!
//! The crate covers the static convolution family (full spatiotemporal,
//! per-axis, decomposed and factorized forms), dynamic decomposed
//! convolutions with input-conditioned adjacency adjustments, the residual
//! prediction network built from them, and the tooling to train, evaluate and
//! verify it at desk scale.

pub mod analysis;
pub mod data;
pub mod dynamic_gc;
pub mod error;
pub mod graphs;
pub mod model;
pub mod numerics;
pub mod static_gc;
pub mod train_eval;

pub use error::{Error, Result};
pub use numerics::{ParamStore, Tape, Tensor, Var};
