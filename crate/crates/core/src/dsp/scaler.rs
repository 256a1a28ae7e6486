//! Robust per-coefficient scaling by median and the 5–95 quantile spacing.

use serde::{Deserialize, Serialize};

use super::DspError;

/// Per-column `(x - median) / max(q95 - q05, epsilon)` transform, fitted on
/// training data only and applied unchanged everywhere else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustScaler {
    pub median: Vec<f64>,
    /// Quantile spacing `q95 - q05` per column.
    pub iqr: Vec<f64>,
    /// Divisor floor for dead columns.
    pub epsilon: f64,
}

pub const SCALER_EPSILON: f64 = 1e-12;

/// Quantile with linear interpolation between closest ranks:
/// position `q·(n-1)` in the sorted data.
pub fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Fit the scaler on a row-major `n x width` training matrix.
pub fn fit_robust_scaler(rows: &[Vec<f64>]) -> Result<RobustScaler, DspError> {
    if rows.len() < 2 {
        return Err(DspError::TooFewRows { got: rows.len(), min: 2 });
    }
    let width = rows[0].len();
    for r in rows {
        if r.len() != width {
            return Err(DspError::BadLength { got: r.len(), expected: width });
        }
    }
    let mut median = Vec::with_capacity(width);
    let mut iqr = Vec::with_capacity(width);
    let mut col = vec![0.0f64; rows.len()];
    for j in 0..width {
        for (i, r) in rows.iter().enumerate() {
            col[i] = r[j];
        }
        col.sort_by(f64::total_cmp);
        median.push(quantile_linear(&col, 0.5));
        iqr.push(quantile_linear(&col, 0.95) - quantile_linear(&col, 0.05));
    }
    Ok(RobustScaler {
        median,
        iqr,
        epsilon: SCALER_EPSILON,
    })
}

/// Scale one vector in place-free form: `(x - median) / max(iqr, epsilon)`.
pub fn apply_scaler(s: &RobustScaler, x: &[f64]) -> Result<Vec<f64>, DspError> {
    if x.len() != s.median.len() {
        return Err(DspError::BadLength { got: x.len(), expected: s.median.len() });
    }
    Ok(x.iter()
        .enumerate()
        .map(|(j, &v)| (v - s.median[j]) / s.iqr[j].max(s.epsilon))
        .collect())
}

impl RobustScaler {
    pub fn apply_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, DspError> {
        rows.iter().map(|r| apply_scaler(self, r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_grid_column_quantiles() {
        // Column 0..=100: median 50, q95 - q05 = 95 - 5 = 90.
        let rows: Vec<Vec<f64>> = (0..=100).map(|i| vec![i as f64]).collect();
        let s = fit_robust_scaler(&rows).unwrap();
        assert_relative_eq!(s.median[0], 50.0);
        assert_relative_eq!(s.iqr[0], 90.0);
    }

    #[test]
    fn constant_column_clamps_divisor() {
        let rows = vec![vec![3.0, 1.0], vec![3.0, 2.0], vec![3.0, 3.0]];
        let s = fit_robust_scaler(&rows).unwrap();
        assert_eq!(s.median[0], 3.0);
        assert_eq!(s.iqr[0], 0.0);
        let scaled = apply_scaler(&s, &[3.0, 2.0]).unwrap();
        assert_eq!(scaled[0], 0.0);
        // A deviation on a dead column divides by epsilon, not zero.
        let scaled = apply_scaler(&s, &[4.0, 2.0]).unwrap();
        assert!(scaled[0].is_finite());
        assert_relative_eq!(scaled[0], 1.0 / SCALER_EPSILON);
    }

    #[test]
    fn median_maps_to_zero_and_median_plus_iqr_to_one() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let s = fit_robust_scaler(&rows).unwrap();
        let zeros = apply_scaler(&s, &s.median.clone()).unwrap();
        for z in zeros {
            assert_relative_eq!(z, 0.0);
        }
        let shifted: Vec<f64> = s.median.iter().zip(&s.iqr).map(|(m, q)| m + q).collect();
        let ones = apply_scaler(&s, &shifted).unwrap();
        for o in ones {
            assert_relative_eq!(o, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn refusing_single_row() {
        assert!(matches!(
            fit_robust_scaler(&[vec![1.0, 2.0]]),
            Err(DspError::TooFewRows { got: 1, min: 2 })
        ));
    }

    #[test]
    fn transformed_training_matrix_has_zero_median() {
        let mut rng = crate::rng::stream_rng(4, "scaler");
        use rand::Rng;
        let rows: Vec<Vec<f64>> = (0..31)
            .map(|_| (0..5).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .collect();
        let s = fit_robust_scaler(&rows).unwrap();
        let scaled = s.apply_rows(&rows).unwrap();
        let rescaled = fit_robust_scaler(&scaled).unwrap();
        for j in 0..5 {
            assert_relative_eq!(rescaled.median[j], 0.0, epsilon = 1e-12);
            assert_relative_eq!(rescaled.iqr[j], 1.0, epsilon = 1e-12);
        }
    }
}
