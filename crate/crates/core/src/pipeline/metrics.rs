//! Accuracy metrics over binary predictions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PipelineError;

fn check_lengths(a: usize, b: usize) -> Result<(), PipelineError> {
    if a == 0 {
        return Err(PipelineError::EmptyInput);
    }
    if a != b {
        return Err(PipelineError::LengthMismatch(a, b));
    }
    Ok(())
}

/// Fraction of correct predictions.
pub fn accuracy(pred: &[bool], truth: &[bool]) -> Result<f64, PipelineError> {
    check_lengths(pred.len(), truth.len())?;
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / pred.len() as f64)
}

/// Unweighted mean of the two per-class recalls.
pub fn balanced_accuracy(pred: &[bool], truth: &[bool]) -> Result<f64, PipelineError> {
    check_lengths(pred.len(), truth.len())?;
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for (p, t) in pred.iter().zip(truth) {
        let class = usize::from(*t);
        total[class] += 1;
        if p == t {
            correct[class] += 1;
        }
    }
    if total[0] == 0 {
        return Err(PipelineError::MissingClass(0));
    }
    if total[1] == 0 {
        return Err(PipelineError::MissingClass(1));
    }
    Ok(0.5 * (correct[0] as f64 / total[0] as f64 + correct[1] as f64 / total[1] as f64))
}

/// Accuracy per unbalance strength: predictions on strength-0 windows are
/// correct when negative, on any other strength when positive.
pub fn per_class_accuracy(
    pred: &[bool],
    strengths: &[u8],
) -> Result<BTreeMap<u8, (f64, usize)>, PipelineError> {
    check_lengths(pred.len(), strengths.len())?;
    let mut correct: BTreeMap<u8, usize> = BTreeMap::new();
    let mut total: BTreeMap<u8, usize> = BTreeMap::new();
    for (p, &s) in pred.iter().zip(strengths) {
        *total.entry(s).or_default() += 1;
        if *p == (s != 0) {
            *correct.entry(s).or_default() += 1;
        }
    }
    Ok(total
        .into_iter()
        .map(|(s, n)| {
            let c = correct.get(&s).copied().unwrap_or(0);
            (s, (c as f64 / n as f64, n))
        })
        .collect())
}

/// One speed bin of an evaluation report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpmBin {
    pub center: f64,
    pub acc: f64,
    pub n: usize,
}

/// Accuracy over uniform speed bins of `bin_width` RPM. Bins partition the
/// observed range; only non-empty bins are returned, ordered by center.
pub fn rpm_binned_accuracy(
    pred: &[bool],
    truth: &[bool],
    rpms: &[f64],
    bin_width: f64,
) -> Result<Vec<RpmBin>, PipelineError> {
    check_lengths(pred.len(), truth.len())?;
    check_lengths(pred.len(), rpms.len())?;
    let mut correct: BTreeMap<i64, usize> = BTreeMap::new();
    let mut total: BTreeMap<i64, usize> = BTreeMap::new();
    for ((p, t), &rpm) in pred.iter().zip(truth).zip(rpms) {
        let bin = (rpm / bin_width).floor() as i64;
        *total.entry(bin).or_default() += 1;
        if p == t {
            *correct.entry(bin).or_default() += 1;
        }
    }
    Ok(total
        .into_iter()
        .map(|(bin, n)| RpmBin {
            center: (bin as f64 + 0.5) * bin_width,
            acc: correct.get(&bin).copied().unwrap_or(0) as f64 / n as f64,
            n,
        })
        .collect())
}
