//! Latent-factor recommendations for binary investor/company data.
//!
//! Companies and investors are embedded as rows of two factor matrices
//! trained by alternating least squares on the dense regularized squared
//! error, with a few conjugate-gradient steps per row. Recommendations rank
//! the unobserved pairs by predicted strength, and the evaluation module
//! measures hold-one-out top-k hit rate over repeated random trials.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod factorization;
pub mod linalg;
pub mod recommend;
pub mod synth;

pub use dataset::{HoldoutSplit, InteractionDataset, InteractionRecord};
pub use error::{Error, Result};
pub use evaluation::{evaluate, run_trial, sweep, EvalConfig, Evaluation, SweepGrid, SweepResult, TrialResult};
pub use factorization::{train, FactorModel, TrainConfig};
pub use linalg::DenseMatrix;
pub use recommend::{top_k, top_k_transposed, RecommendationList};
