//! Convolution + GRU risk model for multivariate patient journeys with
//! missing values, plus imputation baselines, ranking metrics, a synthetic
//! cohort generator and the train/evaluate protocol around them.
//!
//! Everything is plain `f64` and hand-written forward/backward passes; the
//! finite-difference checker in [`numerics::gradcheck`] verifies every
//! gradient path.

pub mod baselines;
pub mod checks;
pub mod conv;
pub mod data;
pub mod datagen;
pub mod error;
pub mod json;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod protocol;
pub mod gru;
pub mod train;

pub use data::{Dataset, Mask, NormMode, Normalizer, PatientJourney};
pub use error::{Error, Result};
pub use metrics::{auprc, auroc, ScoredSet};
pub use model::{ModelParams, Prediction, Variant};
pub use numerics::{DenseMatrix, Rng};
pub use protocol::{EvalReport, Method, MeanStd, RunMetrics};
pub use train::{TrainConfig, TrainHistory};

/// Version string recorded in checkpoints and experiment configs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
