//! Regression with tensor-valued outputs under a multilinear-rank constraint.
//!
//! The central estimator fits `Y ≈ W ×_0 X` where `W` is a Tucker tensor of
//! bounded multilinear rank: one input factor, one factor per output mode and
//! a small core, all in closed form from a handful of eigenproblems. A kernel
//! version works from the Gram matrix alone. Ridge and reduced-rank ridge
//! baselines, seeded data generators and an experiment harness sit alongside.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod fsutil;
pub mod harness;
pub mod linalg;
pub mod regress;
pub mod tensor;

pub use error::{Error, Result, Warning};
pub use tensor::{DenseTensor, Matrix, TuckerFactors};
