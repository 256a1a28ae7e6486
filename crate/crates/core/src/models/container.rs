//! Self-describing model files: JSON containers holding the model kind,
//! hyperparameters, seed, parameter arrays and the fitted scalers needed
//! at inference time.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cnn1d::Cnn1dModel;
use super::forest::RandomForest;
use super::hmm::HmmDetector;
use super::logreg::LogregModel;
use super::mlp::MlpModel;
use super::ModelError;
use crate::dsp::{RobustScaler, StatVariant};
use crate::VERSION;

pub const CONTAINER_FORMAT_VERSION: u32 = 1;

/// The trained parameters of one approach, with whatever fitted
/// preprocessing inference needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelPayload {
    Logreg(LogregModel),
    /// FFT front end: the robust scaler fitted on the training split plus
    /// the fully connected net.
    FftMlp { scaler: RobustScaler, mlp: MlpModel },
    CnnRaw(Cnn1dModel),
    Forest {
        variant: StatVariant,
        forest: RandomForest,
    },
    /// One detector per speed interval.
    HmmDetectors(Vec<HmmDetector>),
}

impl ModelPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelPayload::Logreg(_) => "logreg",
            ModelPayload::FftMlp { .. } => "fft-mlp",
            ModelPayload::CnnRaw(_) => "cnn-raw",
            ModelPayload::Forest { .. } => "random-forest",
            ModelPayload::HmmDetectors(_) => "hmm-mfcc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub crate_version: String,
    pub kind: String,
    /// Free-form experiment metadata (mode, depth, data source, ...).
    pub hyperparams: serde_json::Value,
    pub seed: u64,
    pub payload: ModelPayload,
}

impl ModelFile {
    pub fn new(payload: ModelPayload, hyperparams: serde_json::Value, seed: u64) -> Self {
        Self {
            format_version: CONTAINER_FORMAT_VERSION,
            crate_version: VERSION.to_string(),
            kind: payload.kind().to_string(),
            hyperparams,
            seed,
            payload,
        }
    }
}

pub fn write_model(model: &ModelFile, path: &Path) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<ModelFile, ModelError> {
    let r = BufReader::new(File::open(path)?);
    let model: ModelFile = serde_json::from_reader(r)?;
    if model.format_version != CONTAINER_FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: model.format_version,
            expected: CONTAINER_FORMAT_VERSION,
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_model() {
        let lr = LogregModel {
            weights: vec![0.25, -1.5],
            bias: 0.75,
            reg: 0.01,
        };
        let file = ModelFile::new(
            ModelPayload::Logreg(lr),
            serde_json::json!({"note": "unit"}),
            99,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        write_model(&file, &path).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.kind, "logreg");
    }

    #[test]
    fn incompatible_version_is_rejected() {
        let lr = LogregModel {
            weights: vec![],
            bias: 0.0,
            reg: 0.0,
        };
        let mut file = ModelFile::new(ModelPayload::Logreg(lr), serde_json::Value::Null, 0);
        file.format_version = 999;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut w = std::fs::File::create(&path).unwrap();
        serde_json::to_writer(&mut w, &file).unwrap();
        drop(w);
        assert!(matches!(
            read_model(&path),
            Err(ModelError::VersionMismatch { found: 999, .. })
        ));
    }

    #[test]
    fn identical_models_serialize_to_identical_bytes() {
        let lr = LogregModel {
            weights: vec![1.0 / 3.0, 2.0f64.sqrt()],
            bias: -0.125,
            reg: 0.5,
        };
        let f1 = ModelFile::new(ModelPayload::Logreg(lr.clone()), serde_json::Value::Null, 7);
        let f2 = ModelFile::new(ModelPayload::Logreg(lr), serde_json::Value::Null, 7);
        assert_eq!(
            serde_json::to_vec(&f1).unwrap(),
            serde_json::to_vec(&f2).unwrap()
        );
    }
}
