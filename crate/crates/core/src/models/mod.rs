//! The five learners, implemented from scratch: logistic regression, MLP,
//! 1D CNN, random forest, and a Gaussian-HMM detector.

pub mod cnn1d;
pub mod container;
pub mod forest;
pub mod hmm;
pub mod logreg;
pub mod mlp;
mod nn;

pub use cnn1d::{cnn_train, Cnn1dModel, CnnConfig};
pub use container::{read_model, write_model, ModelFile, ModelPayload, CONTAINER_FORMAT_VERSION};
pub use forest::{rf_predict, rf_train, rf_votes, ForestParams, RandomForest};
pub use hmm::{hmm_fit, hmm_fit_opts, hmm_loglik, GaussianHmm, HmmDetector, HmmFit, HmmFitOptions, Standardizer};
pub use logreg::{logreg_predict, logreg_train, LogregModel};
pub use mlp::{mlp_train, MlpModel, TrainLog};
pub use nn::TrainParams;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("non-finite value in model input")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("empty sequence")]
    EmptySequence,
    #[error("feature extraction failed: {0}")]
    Feature(#[from] crate::dsp::DspError),
    #[error("unsupported model container version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
