//! L2-regularized logistic regression, fitted by damped Newton iterations.

use serde::{Deserialize, Serialize};

use super::nn::{bce, sigmoid};
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogregModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// L2 strength the model was fitted with (weights only, not bias).
    pub reg: f64,
}

impl LogregModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            reg: 0.0,
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

pub fn logreg_predict(model: &LogregModel, x: &[f64]) -> f64 {
    sigmoid(model.logit(x))
}

/// Mean BCE plus the L2 penalty `reg/2 · |w|²` (bias excluded).
pub fn logreg_loss(model: &LogregModel, x: &[Vec<f64>], y: &[bool]) -> f64 {
    let n = x.len() as f64;
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| bce(logreg_predict(model, xi), f64::from(u8::from(yi))))
        .sum::<f64>()
        / n;
    let penalty = 0.5 * model.reg * model.weights.iter().map(|w| w * w).sum::<f64>();
    data + penalty
}

/// Gradient of [`logreg_loss`] over `(weights.., bias)`.
pub fn logreg_gradient(model: &LogregModel, x: &[Vec<f64>], y: &[bool]) -> Vec<f64> {
    let d = model.weights.len();
    let n = x.len() as f64;
    let mut grad = vec![0.0f64; d + 1];
    for (xi, &yi) in x.iter().zip(y) {
        let err = logreg_predict(model, xi) - f64::from(u8::from(yi));
        for (g, v) in grad[..d].iter_mut().zip(xi) {
            *g += err * v / n;
        }
        grad[d] += err / n;
    }
    for (g, w) in grad[..d].iter_mut().zip(&model.weights) {
        *g += model.reg * w;
    }
    grad
}

/// Solve `A x = b` for a small symmetric positive definite-ish system by
/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

/// Fit by Newton steps with backtracking until the gradient norm drops
/// below `1e-7` (or 100 iterations).
///
/// The problem is convex, so the start point does not matter; weights
/// start at zero for determinism.
pub fn logreg_train(x: &[Vec<f64>], y: &[bool], reg: f64) -> Result<LogregModel, ModelError> {
    if x.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if y.iter().all(|&l| l) || y.iter().all(|&l| !l) {
        return Err(ModelError::SingleClass);
    }
    if x.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(ModelError::NonFinite);
    }
    let d = x[0].len();
    let n = x.len() as f64;
    let mut model = LogregModel {
        weights: vec![0.0; d],
        bias: 0.0,
        reg,
    };

    const GRAD_TOL: f64 = 1e-7;
    for _ in 0..100 {
        let grad = logreg_gradient(&model, x, y);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < GRAD_TOL {
            break;
        }

        // Hessian of the mean BCE: X' diag(p(1-p)) X / n, plus reg on the
        // weight block. Tiny ridge keeps it invertible on flat regions.
        let mut h = vec![vec![0.0f64; d + 1]; d + 1];
        for xi in x {
            let p = logreg_predict(&model, xi);
            let r = (p * (1.0 - p)).max(1e-12) / n;
            for a in 0..d {
                for b in a..d {
                    h[a][b] += r * xi[a] * xi[b];
                }
                h[a][d] += r * xi[a];
            }
            h[d][d] += r;
        }
        for a in 0..d {
            h[a][a] += reg + 1e-12;
            for b in 0..a {
                h[a][b] = h[b][a];
            }
        }
        for b in 0..d {
            h[d][b] = h[b][d];
        }

        let step = solve_dense(h, grad.clone()).ok_or(ModelError::NonFinite)?;

        // Backtrack until the loss decreases (or the step gets negligible).
        let loss0 = logreg_loss(&model, x, y);
        let mut t = 1.0f64;
        loop {
            let mut trial = model.clone();
            for (w, s) in trial.weights.iter_mut().zip(&step[..d]) {
                *w -= t * s;
            }
            trial.bias -= t * step[d];
            if logreg_loss(&trial, x, y) <= loss0 || t < 1e-8 {
                model = trial;
                break;
            }
            t *= 0.5;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_half_probability() {
        let m = LogregModel::zeros(4);
        assert_eq!(logreg_predict(&m, &[3.0, -1.0, 0.5, 100.0]), 0.5);
    }

    #[test]
    fn separable_two_points_reach_full_accuracy() {
        let x = vec![vec![-1.0], vec![1.0]];
        let y = vec![false, true];
        let m = logreg_train(&x, &y, 0.01).unwrap();
        assert!(logreg_predict(&m, &x[0]) < 0.5);
        assert!(logreg_predict(&m, &x[1]) > 0.5);
    }

    #[test]
    fn gradient_norm_small_at_optimum() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64) / 10.0 - 2.0, ((i * 7) % 13) as f64 / 13.0])
            .collect();
        let y: Vec<bool> = x.iter().map(|r| r[0] + 0.3 * r[1] > 0.1).collect();
        let m = logreg_train(&x, &y, 0.05).unwrap();
        let g = logreg_gradient(&m, &x, &y);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "gradient norm {norm}");
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let x = vec![vec![0.4, -1.2], vec![1.0, 0.3], vec![-0.7, 0.9], vec![0.1, 0.2]];
        let y = vec![true, false, true, false];
        let m = LogregModel {
            weights: vec![0.3, -0.8],
            bias: 0.15,
            reg: 0.07,
        };
        let grad = logreg_gradient(&m, &x, &y);
        let eps = 1e-6;
        for p in 0..3 {
            let mut plus = m.clone();
            let mut minus = m.clone();
            if p < 2 {
                plus.weights[p] += eps;
                minus.weights[p] -= eps;
            } else {
                plus.bias += eps;
                minus.bias -= eps;
            }
            let num = (logreg_loss(&plus, &x, &y) - logreg_loss(&minus, &x, &y)) / (2.0 * eps);
            assert!((num - grad[p]).abs() < 1e-8, "param {p}: {num} vs {}", grad[p]);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            logreg_train(&x, &[true, true], 0.1),
            Err(ModelError::SingleClass)
        ));
    }

    #[test]
    fn non_finite_features_are_rejected() {
        let x = vec![vec![1.0], vec![f64::NAN]];
        assert!(matches!(
            logreg_train(&x, &[true, false], 0.1),
            Err(ModelError::NonFinite)
        ));
    }
}
