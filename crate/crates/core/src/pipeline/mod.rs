//! Experiment protocols: splits, pairwise vs all-strengths training, the
//! HMM per-speed-interval pipeline, metrics, and report files.

mod experiment;
mod hmm_experiment;
pub mod metrics;
mod report;

pub use experiment::{
    evaluate_model, run_experiment, split_indices, Approach, DataSource, ExperimentOutcome,
    ExperimentSpec, Mode, SyntheticSource,
};
pub use hmm_experiment::{default_speed_intervals, run_hmm_experiment, HmmExperimentSpec, HmmGrid};
pub use metrics::{accuracy, balanced_accuracy, per_class_accuracy, rpm_binned_accuracy, RpmBin};
pub use report::{write_report, EvalReport, ReportFormat};

use std::path::PathBuf;

use thiserror::Error;

use crate::data::{DataError, DatasetId};
use crate::dsp::DspError;
use crate::models::ModelError;
use crate::rigsim::SimError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("too few samples: got {got}, need at least {min}")]
    TooFew { got: usize, min: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("class {0} missing from the ground truth")]
    MissingClass(u8),
    #[error("dataset {id} not found under {dir}")]
    MissingDataset { id: DatasetId, dir: PathBuf },
    #[error("speed interval [{lo}, {hi}) RPM contains no training samples")]
    EmptyInterval { lo: f64, hi: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("report io error: {0}")]
    Io(#[from] std::io::Error),
}
