//! Oversampled adaptive sensing with a predefined codebook.
//!
//! A length-`N` signal is measured over `M` subframes. Each subframe picks
//! the `L` entries whose current estimates look worst, chooses `K`
//! measurement vectors from a fixed codebook, cancels the interference of
//! the remaining entries using the running estimates, and refines the
//! targeted entries with a scalar posterior-mean denoiser.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod codebook;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod selection;

pub use codebook::{generate_codebook, Codebook, SensingMatrix};
pub use engine::{mse, mse_db, run_oas, run_oas_with, OasConfig, OasResult, RunOptions};
pub use error::{OasError, Result};
pub use estimators::{sparse_gaussian_moments, PosteriorMoments, SparseGaussianPrior};
pub use harness::{run_sweep, ExperimentSpec, SweepResult};
pub use selection::{SelectionStrategy, StrategyKind};
