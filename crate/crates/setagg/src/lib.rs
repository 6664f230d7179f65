//! Fixed-length manifold representations for variable-length feature sets.
//!
//! A video (or any ordered set of frame feature vectors) is turned into a
//! fixed number of symmetric positive semi-definite matrices by a
//! differentiable aggregation block, mapped into a discriminative space by a
//! small MLP pretrained as an auto-encoder, and classified with softmax.
//! The crate also ships the SPD and Grassmann manifold metrics the
//! aggregation block generalizes, a three-stage trainer, a synthetic data
//! generator, and an open-set identification evaluator.
//!
//! See the `examples/` directory for runnable walkthroughs of each piece,
//! or the `setagg` binary for the batch CLI.

pub mod aggregation;
pub mod cli;
pub mod error;
pub mod frames;
pub mod linalg;
pub mod manifold;
pub mod mapping;
#[cfg(test)]
pub(crate) mod testutil;
pub mod train;

pub use error::{Error, Result};
pub use linalg::Matrix;
