//! The per-speed-interval HMM detector pipeline: a three-way split of the
//! development data trains scaler+HMM on no-unbalance windows, then
//! scaler+logistic head on both classes, and the third set picks the
//! hyperparameters that maximize balanced accuracy.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{DataSource, SyntheticSource};
use super::metrics::{accuracy, balanced_accuracy, per_class_accuracy, RpmBin};
use super::report::EvalReport;
use super::PipelineError;
use crate::data::{prepare_windows, Channel, DatasetId, Role, WindowSample};
use crate::dsp::{mfcc_sequence, MfccConfig};
use crate::models::{
    hmm_fit, hmm_loglik, logreg_train, HmmDetector, ModelError, Standardizer,
};
use crate::rng::stream_rng;
use crate::VERSION;

/// Unbalance strengths the HMM protocol trains and evaluates on.
const HMM_STRENGTHS: [u8; 2] = [0, 3];

/// Hyperparameter grid searched per speed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmGrid {
    pub n_mfcc: Vec<usize>,
    pub n_states: Vec<usize>,
    pub snippet_len: Vec<usize>,
    /// Overlaps tried per snippet length: none and/or half the length.
    pub half_overlap: Vec<bool>,
}

impl Default for HmmGrid {
    fn default() -> Self {
        Self {
            n_mfcc: vec![8, 13, 20],
            n_states: vec![1, 2, 3, 5],
            snippet_len: vec![256, 512, 1024],
            half_overlap: vec![false, true],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n_mfcc: usize,
    pub n_states: usize,
    pub snippet_len: usize,
    pub overlap: usize,
}

impl HmmGrid {
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &len in &self.snippet_len {
            for &half in &self.half_overlap {
                for &n_mfcc in &self.n_mfcc {
                    for &n_states in &self.n_states {
                        out.push(GridPoint {
                            n_mfcc,
                            n_states,
                            snippet_len: len,
                            overlap: if half { len / 2 } else { 0 },
                        });
                    }
                }
            }
        }
        out
    }
}

/// 100 RPM-wide intervals covering the rig's speed range.
pub fn default_speed_intervals() -> Vec<(f64, f64)> {
    (0..17).map(|i| (630.0 + 100.0 * i as f64, 730.0 + 100.0 * i as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmExperimentSpec {
    pub intervals: Vec<(f64, f64)>,
    pub grid: HmmGrid,
    pub seed: u64,
    pub data: DataSource,
    /// Fractions of each interval's windows that go to the HMM-fitting and
    /// head-fitting sets; the remainder selects hyperparameters.
    pub split_fracs: (f64, f64),
    /// L2 strength of the logistic head.
    pub head_reg: f64,
}

impl Default for HmmExperimentSpec {
    fn default() -> Self {
        Self {
            intervals: default_speed_intervals(),
            grid: HmmGrid::default(),
            seed: 0,
            data: DataSource::Synthetic(SyntheticSource::new(2.0, 0)),
            split_fracs: (0.4, 0.4),
            head_reg: 1e-3,
        }
    }
}

fn gather_windows(data: &DataSource, role: Role) -> Result<Vec<WindowSample>, PipelineError> {
    let mut windows = Vec::new();
    for &k in &HMM_STRENGTHS {
        let rec = data.fetch(DatasetId { strength: k, role })?;
        windows.extend(prepare_windows(&rec, Channel::Vib1)?);
    }
    Ok(windows)
}

/// MFCC frame sequences of a set of windows under one config.
fn sequences_of(windows: &[&WindowSample], cfg: &MfccConfig) -> Result<Vec<Vec<Vec<f64>>>, PipelineError> {
    windows
        .par_iter()
        .map(|w| mfcc_sequence(&w.values, cfg).map_err(PipelineError::from))
        .collect()
}

fn fit_detector(
    point: GridPoint,
    interval: (f64, f64),
    set1: &[&WindowSample],
    set2: &[&WindowSample],
    head_reg: f64,
    seed: u64,
) -> Result<HmmDetector, PipelineError> {
    let cfg = MfccConfig::new(point.n_mfcc, point.snippet_len, point.overlap)?;

    // Stage 1: scaler and HMM on no-unbalance windows only.
    let clean: Vec<&WindowSample> = set1.iter().copied().filter(|w| !w.label).collect();
    if clean.is_empty() {
        return Err(PipelineError::Model(ModelError::EmptyInput));
    }
    let clean_seqs = sequences_of(&clean, &cfg)?;
    let all_frames: Vec<Vec<f64>> = clean_seqs.iter().flatten().cloned().collect();
    let scaler1 = Standardizer::fit(&all_frames)?;
    let scaled_seqs: Vec<Vec<Vec<f64>>> =
        clean_seqs.iter().map(|s| scaler1.apply_rows(s)).collect();
    let fit = hmm_fit(&scaled_seqs, point.n_states, seed)?;

    // Stage 2: scaler and logistic head on the per-window log-likelihoods
    // of both classes.
    let set2_seqs = sequences_of(set2, &cfg)?;
    let features: Vec<Vec<f64>> = set2_seqs
        .iter()
        .map(|s| hmm_loglik(&fit.hmm, &scaler1.apply_rows(s)).map(|ll| vec![ll]))
        .collect::<Result<_, _>>()?;
    let labels: Vec<bool> = set2.iter().map(|w| w.label).collect();
    let scaler2 = Standardizer::fit(&features)?;
    let head = logreg_train(&scaler2.apply_rows(&features), &labels, head_reg)?;

    Ok(HmmDetector {
        rpm_lo: interval.0,
        rpm_hi: interval.1,
        mfcc: cfg,
        scaler1,
        hmm: fit.hmm,
        scaler2,
        head,
    })
}

/// Train one detector per speed interval and evaluate on the evaluation
/// datasets filtered to each interval.
pub fn run_hmm_experiment(spec: &HmmExperimentSpec) -> Result<(Vec<HmmDetector>, EvalReport), PipelineError> {
    let dev = gather_windows(&spec.data, Role::Development)?;
    let points = spec.grid.points();

    let mut detectors = Vec::with_capacity(spec.intervals.len());
    for (i_idx, &(lo, hi)) in spec.intervals.iter().enumerate() {
        let mut in_interval: Vec<&WindowSample> = dev
            .iter()
            .filter(|w| w.mean_rpm >= lo && w.mean_rpm < hi)
            .collect();
        if in_interval.is_empty() {
            return Err(PipelineError::EmptyInterval { lo, hi });
        }
        if in_interval.len() < 10 {
            return Err(PipelineError::TooFew { got: in_interval.len(), min: 10 });
        }

        // Three-way split.
        in_interval.shuffle(&mut stream_rng(spec.seed, &format!("hmm-split-{i_idx}")));
        let n = in_interval.len();
        let n1 = ((spec.split_fracs.0 * n as f64).floor() as usize).max(1);
        let n2 = ((spec.split_fracs.1 * n as f64).floor() as usize).max(1);
        let set1 = &in_interval[..n1];
        let set2 = &in_interval[n1..n1 + n2];
        let set3 = &in_interval[n1 + n2..];

        // Grid search: fit on sets 1 and 2, select by balanced accuracy on
        // set 3. Failed points (e.g. degenerate splits) are skipped.
        let candidates: Vec<(usize, f64, HmmDetector)> = points
            .par_iter()
            .enumerate()
            .filter_map(|(p_idx, point)| {
                let point_seed: u64 =
                    stream_rng(spec.seed, &format!("hmm-i{i_idx}-p{p_idx}")).gen();
                let det =
                    fit_detector(*point, (lo, hi), set1, set2, spec.head_reg, point_seed).ok()?;
                let preds: Vec<bool> = set3
                    .iter()
                    .map(|w| det.predict(&w.values))
                    .collect::<Result<_, _>>()
                    .ok()?;
                let truth: Vec<bool> = set3.iter().map(|w| w.label).collect();
                let bacc = balanced_accuracy(&preds, &truth).ok()?;
                Some((p_idx, bacc, det))
            })
            .collect();
        let best = candidates
            .into_iter()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .ok_or(PipelineError::EmptyInterval { lo, hi })?;
        detectors.push(best.2);
    }

    let spec_echo = serde_json::to_value(spec).map_err(std::io::Error::other)?;
    let report = evaluate_detectors(&detectors, &spec.data, spec_echo, spec.seed)?;
    Ok((detectors, report))
}

/// Evaluate fitted detectors on the evaluation datasets; each window is
/// scored by the detector covering its mean speed, windows outside every
/// interval are skipped. One rpm bin per non-empty interval.
pub fn evaluate_detectors(
    detectors: &[HmmDetector],
    data: &DataSource,
    spec_echo: serde_json::Value,
    seed: u64,
) -> Result<EvalReport, PipelineError> {
    let eval = gather_windows(data, Role::Evaluation)?;

    struct Scored {
        det_idx: usize,
        pred: bool,
        label: bool,
        strength: u8,
    }
    let scored: Vec<Scored> = eval
        .par_iter()
        .filter_map(|w| {
            let det_idx = detectors.iter().position(|d| d.covers(w.mean_rpm))?;
            let pred = detectors[det_idx].predict(&w.values).ok()?;
            Some(Scored { det_idx, pred, label: w.label, strength: w.unbalance_id })
        })
        .collect();
    if scored.is_empty() {
        return Err(PipelineError::EmptyInput);
    }

    let preds: Vec<bool> = scored.iter().map(|s| s.pred).collect();
    let labels: Vec<bool> = scored.iter().map(|s| s.label).collect();
    let strengths: Vec<u8> = scored.iter().map(|s| s.strength).collect();

    let mut rpm_bins = Vec::new();
    for (d_idx, det) in detectors.iter().enumerate() {
        let hits: Vec<&Scored> = scored.iter().filter(|s| s.det_idx == d_idx).collect();
        if hits.is_empty() {
            continue;
        }
        let correct = hits.iter().filter(|s| s.pred == s.label).count();
        rpm_bins.push(RpmBin {
            center: 0.5 * (det.rpm_lo + det.rpm_hi),
            acc: correct as f64 / hits.len() as f64,
            n: hits.len(),
        });
    }

    let per_class = per_class_accuracy(&preds, &strengths)?
        .into_iter()
        .map(|(k, (acc, _))| (k.to_string(), acc))
        .collect();
    Ok(EvalReport {
        spec: spec_echo,
        overall_accuracy: accuracy(&preds, &labels)?,
        balanced_accuracy: balanced_accuracy(&preds, &labels)?,
        per_class,
        rpm_bins,
        seed,
        version: VERSION.to_string(),
    })
}
