//! Training/evaluation protocols shared by all approaches: development
//! datasets are split 90/10 into train/test, scalers are fitted on the
//! training split only, and held-out evaluation datasets never influence
//! fitting.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hmm_experiment::{default_speed_intervals, run_hmm_experiment, HmmExperimentSpec};
use super::metrics::{accuracy, balanced_accuracy, per_class_accuracy, rpm_binned_accuracy};
use super::report::EvalReport;
use super::PipelineError;
use crate::data::{load_recording, prepare_windows, trim_warmup, Channel, DatasetId, Recording, Role, WARMUP_SAMPLES};
use crate::dsp::{apply_scaler, fit_robust_scaler, rfft_magnitudes, stat_features, StatVariant};
use crate::models::{
    cnn_train, mlp_train, rf_predict, rf_train, CnnConfig, ForestParams, ModelFile, ModelPayload,
    TrainLog, TrainParams,
};
use crate::rigsim::{simulate, SimConfig};
use crate::rng::stream_rng;
use crate::VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    CnnRaw,
    FftMlp,
    RfMinimal3,
    RfMinimal7,
    HmmMfcc,
}

/// Which unbalance strengths take part in training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// No-unbalance against one single strength.
    Pairwise(u8),
    AllStrengths,
}

impl Mode {
    pub fn strengths(&self) -> Vec<u8> {
        match self {
            Mode::Pairwise(k) => vec![0, *k],
            Mode::AllStrengths => (0..=4).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if let Mode::Pairwise(k) = self {
            if !(1..=4).contains(k) {
                return Err(PipelineError::MissingClass(*k));
            }
        }
        Ok(())
    }
}

/// Desk-scale synthetic data source: one simulated rig per strength, with
/// the acquisition schedule shortened to `step_secs` per voltage step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub step_secs: f64,
    pub seed: u64,
    /// Optional overrides of the stock signal model.
    pub base_noise_sigma: Option<f64>,
    pub remount_jitter: Option<f64>,
    /// Reuse one rig realization (noise, phases, sensor gains) for every
    /// strength, so cross-strength comparisons isolate the unbalance
    /// factor. Off by default: independent rigs per strength.
    #[serde(default)]
    pub shared_rig: bool,
}

impl SyntheticSource {
    pub fn new(step_secs: f64, seed: u64) -> Self {
        Self {
            step_secs,
            seed,
            base_noise_sigma: None,
            remount_jitter: None,
            shared_rig: false,
        }
    }

    /// Simulator config for one dataset. Each strength gets its own seed
    /// (independent rigs) unless `shared_rig` is set; development and
    /// evaluation share it, so they differ only through the schedule and
    /// the remount perturbation.
    pub fn config_for(&self, id: DatasetId) -> SimConfig {
        let ds_seed: u64 = if self.shared_rig {
            stream_rng(self.seed, "dataset-shared-rig").gen()
        } else {
            stream_rng(self.seed, &format!("dataset-strength-{}", id.strength)).gen()
        };
        let mut cfg = SimConfig::for_dataset(id.strength, id.role, self.step_secs, ds_seed);
        if let Some(s) = self.base_noise_sigma {
            cfg.base_noise_sigma = s;
        }
        if let Some(j) = self.remount_jitter {
            cfg.remount_jitter = j;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    Synthetic(SyntheticSource),
    RealDirectory(PathBuf),
}

impl DataSource {
    pub fn fetch(&self, id: DatasetId) -> Result<Recording, PipelineError> {
        match self {
            DataSource::Synthetic(src) => Ok(simulate(&src.config_for(id), id)?),
            DataSource::RealDirectory(dir) => {
                let path = dir.join(id.filename());
                if !path.is_file() {
                    return Err(PipelineError::MissingDataset { id, dir: dir.clone() });
                }
                Ok(load_recording(&path, id)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub approach: Approach,
    pub mode: Mode,
    /// Depth knob: hidden layers for the MLP, conv blocks for the CNN.
    pub depth: usize,
    pub seed: u64,
    pub data: DataSource,
    pub train: TrainParams,
    pub hidden_width: usize,
    pub forest: ForestParams,
    pub split_frac: f64,
    pub rpm_bin_width: f64,
}

impl ExperimentSpec {
    pub fn new(approach: Approach, mode: Mode, depth: usize, seed: u64, data: DataSource) -> Self {
        Self {
            approach,
            mode,
            depth,
            seed,
            data,
            train: TrainParams::default(),
            hidden_width: crate::models::mlp::DEFAULT_HIDDEN_WIDTH,
            forest: ForestParams::default(),
            split_frac: 0.9,
            rpm_bin_width: 100.0,
        }
    }
}

/// Uniform random partition of `0..n` into train/test index sets,
/// reproducible by seed. Both halves come back sorted.
pub fn split_indices(n: usize, frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), PipelineError> {
    if n < 10 {
        return Err(PipelineError::TooFew { got: n, min: 10 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, "dev-split"));
    let n_train = ((frac * n as f64).floor() as usize).clamp(1, n - 1);
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Per-window model inputs with their labels and speed metadata.
#[derive(Debug, Default, Clone)]
struct LabeledRows {
    rows: Vec<Vec<f64>>,
    labels: Vec<bool>,
    strengths: Vec<u8>,
    rpms: Vec<f64>,
}

impl LabeledRows {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn extend(&mut self, other: LabeledRows) {
        self.rows.extend(other.rows);
        self.labels.extend(other.labels);
        self.strengths.extend(other.strengths);
        self.rpms.extend(other.rpms);
    }

    fn select(&self, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<bool>) {
        (
            idx.iter().map(|&i| self.rows[i].clone()).collect(),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// The input representation each payload kind consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Representation {
    RawWindow,
    FftMagnitudes,
    Stat(StatVariant),
}

impl Representation {
    fn for_approach(approach: Approach) -> Self {
        match approach {
            Approach::CnnRaw => Representation::RawWindow,
            Approach::FftMlp => Representation::FftMagnitudes,
            Approach::RfMinimal3 => Representation::Stat(StatVariant::ThreeFeature),
            Approach::RfMinimal7 => Representation::Stat(StatVariant::SevenFeature),
            Approach::HmmMfcc => unreachable!("HMM pipeline extracts its own features"),
        }
    }

    fn for_payload(payload: &ModelPayload) -> Option<Self> {
        match payload {
            ModelPayload::CnnRaw(_) => Some(Representation::RawWindow),
            ModelPayload::FftMlp { .. } | ModelPayload::Logreg(_) => Some(Representation::FftMagnitudes),
            ModelPayload::Forest { variant, .. } => Some(Representation::Stat(*variant)),
            ModelPayload::HmmDetectors(_) => None,
        }
    }
}

fn extract(rec: &Recording, repr: Representation) -> Result<LabeledRows, PipelineError> {
    let mut out = LabeledRows::default();
    match repr {
        Representation::RawWindow | Representation::FftMagnitudes => {
            let windows = prepare_windows(rec, Channel::Vib1)?;
            out.rows = if repr == Representation::RawWindow {
                windows.iter().map(|w| w.values.clone()).collect()
            } else {
                windows
                    .par_iter()
                    .map(|w| rfft_magnitudes(&w.values).map(|s| s.magnitudes))
                    .collect::<Result<Vec<_>, _>>()?
            };
            out.labels = windows.iter().map(|w| w.label).collect();
            out.strengths = windows.iter().map(|w| w.unbalance_id).collect();
            out.rpms = windows.iter().map(|w| w.mean_rpm).collect();
        }
        Representation::Stat(variant) => {
            let trimmed = trim_warmup(rec, WARMUP_SAMPLES)?;
            let m = stat_features(&trimmed, variant)?;
            out.labels = m.meta.iter().map(|r| r.label).collect();
            out.strengths = m.meta.iter().map(|r| r.strength).collect();
            out.rpms = m.meta.iter().map(|r| r.mean_rpm).collect();
            out.rows = m.rows;
        }
    }
    Ok(out)
}

fn gather(data: &DataSource, strengths: &[u8], role: Role, repr: Representation) -> Result<LabeledRows, PipelineError> {
    let mut all = LabeledRows::default();
    for &k in strengths {
        let id = DatasetId { strength: k, role };
        let rec = data.fetch(id)?;
        all.extend(extract(&rec, repr)?);
    }
    Ok(all)
}

fn predict_rows(payload: &ModelPayload, rows: &[Vec<f64>]) -> Result<Vec<bool>, PipelineError> {
    let preds: Result<Vec<bool>, PipelineError> = match payload {
        ModelPayload::FftMlp { scaler, mlp } => rows
            .par_iter()
            .map(|r| {
                let scaled = apply_scaler(scaler, r)?;
                Ok(mlp.forward(&scaled).map_err(PipelineError::from)? > 0.5)
            })
            .collect(),
        ModelPayload::Logreg(model) => Ok(rows
            .par_iter()
            .map(|r| crate::models::logreg_predict(model, r) > 0.5)
            .collect()),
        ModelPayload::CnnRaw(model) => rows
            .par_iter()
            .map(|r| Ok(model.forward(r).map_err(PipelineError::from)? > 0.5))
            .collect(),
        ModelPayload::Forest { forest, .. } => {
            Ok(rows.par_iter().map(|r| rf_predict(forest, r)).collect())
        }
        ModelPayload::HmmDetectors(_) => {
            unreachable!("HMM detectors predict per speed interval")
        }
    };
    preds
}

fn build_report(
    spec_echo: serde_json::Value,
    preds: &[bool],
    eval: &LabeledRows,
    bin_width: f64,
    seed: u64,
) -> Result<EvalReport, PipelineError> {
    let per_class = per_class_accuracy(preds, &eval.strengths)?
        .into_iter()
        .map(|(k, (acc, _))| (k.to_string(), acc))
        .collect();
    Ok(EvalReport {
        spec: spec_echo,
        overall_accuracy: accuracy(preds, &eval.labels)?,
        balanced_accuracy: balanced_accuracy(preds, &eval.labels)?,
        per_class,
        rpm_bins: rpm_binned_accuracy(preds, &eval.labels, &eval.rpms, bin_width)?,
        seed,
        version: VERSION.to_string(),
    })
}

/// Outcome of [`run_experiment`].
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub model: ModelFile,
    pub report: EvalReport,
    /// Per-epoch losses for the gradient-trained approaches.
    pub train_log: Option<TrainLog>,
}

/// Train per the spec on development data, then evaluate on the held-out
/// evaluation datasets of the same strengths.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome, PipelineError> {
    spec.mode.validate()?;
    if spec.approach == Approach::HmmMfcc {
        let hmm_spec = HmmExperimentSpec {
            intervals: default_speed_intervals(),
            seed: spec.seed,
            data: spec.data.clone(),
            ..HmmExperimentSpec::default()
        };
        let (detectors, report) = run_hmm_experiment(&hmm_spec)?;
        let model = ModelFile::new(
            ModelPayload::HmmDetectors(detectors),
            serde_json::to_value(&hmm_spec).map_err(std::io::Error::other)?,
            spec.seed,
        );
        return Ok(ExperimentOutcome { model, report, train_log: None });
    }

    let repr = Representation::for_approach(spec.approach);
    let strengths = spec.mode.strengths();
    let dev = gather(&spec.data, &strengths, Role::Development, repr)?;
    let (train_idx, test_idx) = split_indices(dev.len(), spec.split_frac, spec.seed)?;
    let (train_x, train_y) = dev.select(&train_idx);
    let (test_x, test_y) = dev.select(&test_idx);

    let mut train_log = None;
    let payload = match spec.approach {
        Approach::FftMlp => {
            // The robust scaler sees the training split only.
            let scaler = fit_robust_scaler(&train_x)?;
            let train_s = scaler.apply_rows(&train_x)?;
            let test_s = scaler.apply_rows(&test_x)?;
            let (mlp, log) = mlp_train(
                &train_s,
                &train_y,
                &test_s,
                &test_y,
                spec.depth,
                spec.hidden_width,
                spec.seed,
                &spec.train,
            )?;
            train_log = Some(log);
            ModelPayload::FftMlp { scaler, mlp }
        }
        Approach::CnnRaw => {
            let config = CnnConfig::for_windows(spec.depth);
            let (cnn, log) = cnn_train(&train_x, &train_y, &test_x, &test_y, config, spec.seed, &spec.train)?;
            train_log = Some(log);
            ModelPayload::CnnRaw(cnn)
        }
        Approach::RfMinimal3 | Approach::RfMinimal7 => {
            let variant = match spec.approach {
                Approach::RfMinimal3 => StatVariant::ThreeFeature,
                _ => StatVariant::SevenFeature,
            };
            let params = ForestParams { seed: spec.seed, ..spec.forest };
            let forest = rf_train(&train_x, &train_y, params)?;
            ModelPayload::Forest { variant, forest }
        }
        Approach::HmmMfcc => unreachable!("dispatched above"),
    };

    let spec_echo = serde_json::to_value(spec).map_err(std::io::Error::other)?;
    let model = ModelFile::new(payload, spec_echo.clone(), spec.seed);

    let eval = gather(&spec.data, &strengths, Role::Evaluation, repr)?;
    let preds = predict_rows(&model.payload, &eval.rows)?;
    let report = build_report(spec_echo, &preds, &eval, spec.rpm_bin_width, spec.seed)?;

    Ok(ExperimentOutcome { model, report, train_log })
}

/// Evaluate a stored model against the evaluation datasets of a data
/// source; the strengths come from the model's recorded experiment spec.
pub fn evaluate_model(
    model: &ModelFile,
    data: &DataSource,
    rpm_bin_width: f64,
) -> Result<EvalReport, PipelineError> {
    if let ModelPayload::HmmDetectors(detectors) = &model.payload {
        let spec: HmmExperimentSpec =
            serde_json::from_value(model.hyperparams.clone()).map_err(std::io::Error::other)?;
        return super::hmm_experiment::evaluate_detectors(
            detectors,
            data,
            model.hyperparams.clone(),
            model.seed,
        )
        .map(|mut r| {
            r.spec = serde_json::to_value(&spec).unwrap_or(serde_json::Value::Null);
            r
        });
    }

    let spec: ExperimentSpec =
        serde_json::from_value(model.hyperparams.clone()).map_err(std::io::Error::other)?;
    let repr = Representation::for_payload(&model.payload).expect("non-HMM payload");
    let eval = gather(data, &spec.mode.strengths(), Role::Evaluation, repr)?;
    let preds = predict_rows(&model.payload, &eval.rows)?;
    build_report(model.hyperparams.clone(), &preds, &eval, rpm_bin_width, model.seed)
}
