//! ArcGD: bounded, phase-aware gradient updates.
//!
//! The crate is split into the optimizer kernels and the two benchmark
//! suites that exercise them:
//!
//! - [`arcgd`]: the gradient transform `T = g / sqrt(1 + g^2)`, the ArcGD
//!   update in all of its variants, and the reference/limit rules.
//! - [`baselines`]: SGD, Adam/AdamW and Lion.
//! - [`optim`]: a stateful [`Optimizer`] trait over flat parameter slices so the
//!   benchmarks can swap optimizers freely.
//! - [`rosenbrock`]: the stochastic Rosenbrock suite with EMA/patience stopping.
//! - [`mlp`]: a from-scratch MLP classifier, datasets and the training loop.
//! - [`report`]: CSV / JSON emission of run records, summaries and curves.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod arcgd;
pub mod baselines;
pub mod error;
pub mod mlp;
pub mod optim;
pub mod report;
pub mod rng;
pub mod rosenbrock;

pub use arcgd::{ArcGdConfig, FloorMode, OptimizerState, UpdateBreakdown};
pub use baselines::{AdamConfig, AdamState, LionConfig, SgdConfig};
pub use error::{Error, Result};
pub use optim::{Optimizer, OptimizerKind, OptimizerSpec};
pub use rosenbrock::{
    ConvergencePolicy, MatrixConfig, RosenbrockProblem, RunRecord, RunStatus, RunSummary,
};

/// Master seed used throughout the benchmarks unless overridden.
pub const DEFAULT_SEED: u64 = 42;
