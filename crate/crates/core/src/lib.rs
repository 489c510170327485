//! Training and auditing neural networks under gradient-based
//! monotonicity penalties.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: a reverse-mode engine whose gradients are themselves
//!   differentiable, so penalties on input gradients can be trained.
//! - [`models`]: dense MLPs (optionally with a split input layer) and a
//!   classifier whose wide hidden layer is partitioned into class slices.
//! - [`penalties`]: point-wise, mini-batch, uniform-random, mixup and group
//!   monotonicity penalties.
//! - [`datagen`]: a synthetic generator with covariate shift, CSV ingestion
//!   and Gaussian blobs.
//! - [`metrics`]: violation rates, prediction metrics, total-activation
//!   accuracy, normalized entropy, AUC and n-ball concentration analytics.
//! - [`attacks`]: L∞ projected gradient descent.
//! - [`trainer`]: the penalised risk-minimisation loop with Adam/SGD.
//! - [`experiment`]: config-driven runners behind the `monograd` CLI.

pub mod attacks;
pub mod autodiff;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod penalties;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
