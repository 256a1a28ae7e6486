//! Diagonal-Gaussian hidden Markov model fitted by Baum-Welch, and the
//! unbalance detector head built on it: MFCC frames -> scaler -> HMM
//! log-likelihood -> scaler -> logistic regression.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::logreg::{logreg_predict, LogregModel};
use super::ModelError;
use crate::dsp::{mfcc_sequence, MfccConfig};
use crate::rng::stream_rng;

const LN_TAU: f64 = 1.8378770664093453; // ln(2*pi)

/// Relative emission-variance floor: per dimension, `1e-6` of the global
/// variance of the training frames (with a tiny absolute guard).
const VAR_FLOOR_REL: f64 = 1e-6;
const VAR_FLOOR_ABS: f64 = 1e-12;

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianHmm {
    pub n_states: usize,
    pub dim: usize,
    /// Initial state distribution, sums to 1.
    pub pi: Vec<f64>,
    /// Row-stochastic transition matrix, row-major `n_states x n_states`.
    pub trans: Vec<f64>,
    /// Per-state emission means and diagonal variances, `n_states x dim`.
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
    /// Set when any EM variance update hit the floor.
    pub variance_clamped: bool,
}

impl GaussianHmm {
    fn log_emission(&self, state: usize, x: &[f64]) -> f64 {
        let mu = &self.means[state * self.dim..(state + 1) * self.dim];
        let var = &self.vars[state * self.dim..(state + 1) * self.dim];
        let mut ll = 0.0;
        for d in 0..self.dim {
            let diff = x[d] - mu[d];
            ll -= 0.5 * (LN_TAU + var[d].ln() + diff * diff / var[d]);
        }
        ll
    }

    /// Log-space forward pass; returns the total sequence log-likelihood.
    fn forward_loglik(&self, seq: &[Vec<f64>]) -> f64 {
        let n = self.n_states;
        let log_pi: Vec<f64> = self.pi.iter().map(|p| p.ln()).collect();
        let log_a: Vec<f64> = self.trans.iter().map(|p| p.ln()).collect();
        let mut alpha: Vec<f64> = (0..n)
            .map(|j| log_pi[j] + self.log_emission(j, &seq[0]))
            .collect();
        let mut scratch = vec![0.0f64; n];
        for x in &seq[1..] {
            let mut next = vec![0.0f64; n];
            for (j, nj) in next.iter_mut().enumerate() {
                for i in 0..n {
                    scratch[i] = alpha[i] + log_a[i * n + j];
                }
                *nj = logsumexp(&scratch) + self.log_emission(j, x);
            }
            alpha = next;
        }
        logsumexp(&alpha)
    }
}

/// Per-frame forward log-likelihood of a (scaled) feature sequence.
///
/// Length-normalized so windows with different snippet counts are
/// comparable. Never `-inf`: emissions are finite for finite inputs and
/// floored variances.
pub fn hmm_loglik(hmm: &GaussianHmm, seq: &[Vec<f64>]) -> Result<f64, ModelError> {
    if seq.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    for f in seq {
        if f.len() != hmm.dim {
            return Err(ModelError::ShapeMismatch(format!(
                "frame dim {} vs model dim {}",
                f.len(),
                hmm.dim
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
    }
    Ok(hmm.forward_loglik(seq) / seq.len() as f64)
}

/// A fitted HMM plus the EM log-likelihood trace (one entry per iteration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmFit {
    pub hmm: GaussianHmm,
    pub loglik_trace: Vec<f64>,
}

/// EM stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmmFitOptions {
    pub max_iters: usize,
    /// Stop once the log-likelihood gain falls below this.
    pub tol: f64,
}

impl Default for HmmFitOptions {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-6 }
    }
}

/// Baum-Welch EM until the log-likelihood gain drops below `1e-6` or 200
/// iterations. All recursions run in log space; emission variances are
/// clamped to the floor (and flagged) rather than collapsing.
pub fn hmm_fit(sequences: &[Vec<Vec<f64>>], n_states: usize, seed: u64) -> Result<HmmFit, ModelError> {
    hmm_fit_opts(sequences, n_states, seed, HmmFitOptions::default())
}

/// [`hmm_fit`] with an explicit stopping rule.
pub fn hmm_fit_opts(
    sequences: &[Vec<Vec<f64>>],
    n_states: usize,
    seed: u64,
    opts: HmmFitOptions,
) -> Result<HmmFit, ModelError> {
    if sequences.is_empty() || sequences.iter().any(|s| s.is_empty()) {
        return Err(ModelError::EmptyInput);
    }
    if n_states == 0 {
        return Err(ModelError::ShapeMismatch("n_states must be >= 1".into()));
    }
    let dim = sequences[0][0].len();
    for s in sequences {
        for f in s {
            if f.len() != dim {
                return Err(ModelError::ShapeMismatch("inconsistent frame dims".into()));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite);
            }
        }
    }

    // Global per-dimension moments set the variance floor and the init.
    let n_frames: usize = sequences.iter().map(Vec::len).sum();
    let mut g_mean = vec![0.0f64; dim];
    for s in sequences {
        for f in s {
            for d in 0..dim {
                g_mean[d] += f[d];
            }
        }
    }
    for v in g_mean.iter_mut() {
        *v /= n_frames as f64;
    }
    let mut g_var = vec![0.0f64; dim];
    for s in sequences {
        for f in s {
            for d in 0..dim {
                let diff = f[d] - g_mean[d];
                g_var[d] += diff * diff;
            }
        }
    }
    let floor: Vec<f64> = g_var
        .iter_mut()
        .map(|v| {
            *v /= n_frames as f64;
            (VAR_FLOOR_REL * *v).max(VAR_FLOOR_ABS)
        })
        .collect();

    // Initial model: means at randomly chosen frames, global variances,
    // uniform pi and transitions.
    let mut rng = stream_rng(seed, "hmm-init");
    let mut frame_ids: Vec<(usize, usize)> = sequences
        .iter()
        .enumerate()
        .flat_map(|(s, sq)| (0..sq.len()).map(move |t| (s, t)))
        .collect();
    frame_ids.shuffle(&mut rng);
    let mut means = Vec::with_capacity(n_states * dim);
    for k in 0..n_states {
        let (s, t) = frame_ids[k % frame_ids.len()];
        means.extend_from_slice(&sequences[s][t]);
    }
    let mut hmm = GaussianHmm {
        n_states,
        dim,
        pi: vec![1.0 / n_states as f64; n_states],
        trans: vec![1.0 / n_states as f64; n_states * n_states],
        means,
        vars: (0..n_states)
            .flat_map(|_| g_var.iter().zip(&floor).map(|(v, f)| v.max(*f)))
            .collect(),
        variance_clamped: false,
    };

    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    for _iter in 0..opts.max_iters {
        let n = n_states;
        let log_pi: Vec<f64> = hmm.pi.iter().map(|p| p.ln()).collect();
        let log_a: Vec<f64> = hmm.trans.iter().map(|p| p.ln()).collect();

        let mut total_ll = 0.0;
        let mut acc_pi = vec![0.0f64; n];
        let mut acc_xi = vec![0.0f64; n * n];
        let mut acc_gamma_trans = vec![0.0f64; n]; // occupancy over t = 0..T-2
        let mut acc_gamma = vec![0.0f64; n];
        let mut acc_x = vec![0.0f64; n * dim];
        let mut acc_x2 = vec![0.0f64; n * dim];

        for seq in sequences {
            let t_len = seq.len();
            let log_b: Vec<Vec<f64>> = seq
                .iter()
                .map(|x| (0..n).map(|j| hmm.log_emission(j, x)).collect())
                .collect();

            // Forward and backward in log space.
            let mut alpha = vec![vec![0.0f64; n]; t_len];
            for j in 0..n {
                alpha[0][j] = log_pi[j] + log_b[0][j];
            }
            let mut scratch = vec![0.0f64; n];
            for t in 1..t_len {
                for j in 0..n {
                    for i in 0..n {
                        scratch[i] = alpha[t - 1][i] + log_a[i * n + j];
                    }
                    alpha[t][j] = logsumexp(&scratch) + log_b[t][j];
                }
            }
            let seq_ll = logsumexp(&alpha[t_len - 1]);
            total_ll += seq_ll;

            let mut beta = vec![vec![0.0f64; n]; t_len];
            for t in (0..t_len - 1).rev() {
                for i in 0..n {
                    for j in 0..n {
                        scratch[j] = log_a[i * n + j] + log_b[t + 1][j] + beta[t + 1][j];
                    }
                    beta[t][i] = logsumexp(&scratch);
                }
            }

            for t in 0..t_len {
                for j in 0..n {
                    let g = (alpha[t][j] + beta[t][j] - seq_ll).exp();
                    if t == 0 {
                        acc_pi[j] += g;
                    }
                    if t + 1 < t_len {
                        acc_gamma_trans[j] += g;
                    }
                    acc_gamma[j] += g;
                    for d in 0..dim {
                        let x = seq[t][d];
                        acc_x[j * dim + d] += g * x;
                        acc_x2[j * dim + d] += g * x * x;
                    }
                }
            }
            for t in 1..t_len {
                for i in 0..n {
                    for j in 0..n {
                        acc_xi[i * n + j] += (alpha[t - 1][i]
                            + log_a[i * n + j]
                            + log_b[t][j]
                            + beta[t][j]
                            - seq_ll)
                            .exp();
                    }
                }
            }
        }

        trace.push(total_ll);
        let gain = total_ll - prev_ll;
        prev_ll = total_ll;

        // M-step. Zero-occupancy states keep their previous parameters.
        let n_seq = sequences.len() as f64;
        for j in 0..n {
            hmm.pi[j] = acc_pi[j] / n_seq;
        }
        let pi_sum: f64 = hmm.pi.iter().sum();
        for p in hmm.pi.iter_mut() {
            *p /= pi_sum;
        }
        for i in 0..n {
            if acc_gamma_trans[i] > 0.0 {
                let row_sum: f64 = acc_xi[i * n..(i + 1) * n].iter().sum();
                if row_sum > 0.0 {
                    for j in 0..n {
                        hmm.trans[i * n + j] = acc_xi[i * n + j] / row_sum;
                    }
                }
            }
        }
        for j in 0..n {
            if acc_gamma[j] > 0.0 {
                for d in 0..dim {
                    let mu = acc_x[j * dim + d] / acc_gamma[j];
                    hmm.means[j * dim + d] = mu;
                    let var = acc_x2[j * dim + d] / acc_gamma[j] - mu * mu;
                    if var < floor[d] {
                        hmm.vars[j * dim + d] = floor[d];
                        hmm.variance_clamped = true;
                    } else {
                        hmm.vars[j * dim + d] = var;
                    }
                }
            }
        }

        if gain.abs() < opts.tol {
            break;
        }
    }

    Ok(HmmFit { hmm, loglik_trace: trace })
}

/// Zero-mean, unit-variance feature scaler (population std, floored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        if rows.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0f64; dim];
        for r in rows {
            for d in 0..dim {
                mean[d] += r[d];
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut std = vec![0.0f64; dim];
        for r in rows {
            for d in 0..dim {
                let diff = r[d] - mean[d];
                std[d] += diff * diff;
            }
        }
        for s in std.iter_mut() {
            *s = (*s / n).sqrt().max(1e-12);
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply_rows(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

/// Complete unbalance detector for one speed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmDetector {
    pub rpm_lo: f64,
    pub rpm_hi: f64,
    pub mfcc: MfccConfig,
    pub scaler1: Standardizer,
    pub hmm: GaussianHmm,
    pub scaler2: Standardizer,
    pub head: LogregModel,
}

impl HmmDetector {
    pub fn covers(&self, rpm: f64) -> bool {
        rpm >= self.rpm_lo && rpm < self.rpm_hi
    }

    /// The per-frame HMM log-likelihood of one window, after MFCC
    /// extraction and the first scaler.
    pub fn loglik_feature(&self, window_values: &[f64]) -> Result<f64, ModelError> {
        let frames = mfcc_sequence(window_values, &self.mfcc)?;
        let scaled = self.scaler1.apply_rows(&frames);
        hmm_loglik(&self.hmm, &scaled)
    }

    /// Probability that the window shows an unbalance.
    pub fn score(&self, window_values: &[f64]) -> Result<f64, ModelError> {
        let ll = self.loglik_feature(window_values)?;
        let feat = self.scaler2.apply(&[ll]);
        Ok(logreg_predict(&self.head, &feat))
    }

    pub fn predict(&self, window_values: &[f64]) -> Result<bool, ModelError> {
        Ok(self.score(window_values)? > 0.5)
    }
}
