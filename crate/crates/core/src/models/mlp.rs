//! Fully connected network with LeakyReLU hidden layers and a single
//! sigmoid output node. Zero hidden layers is exactly logistic regression.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nn::{bce, init_fan_in, leaky_relu, leaky_relu_grad, sigmoid, Adam, TrainParams};
use super::ModelError;
use crate::rng::stream_rng;

pub const DEFAULT_NEGATIVE_SLOPE: f64 = 0.01;
pub const DEFAULT_HIDDEN_WIDTH: usize = 64;
pub const MAX_HIDDEN_LAYERS: usize = 4;

/// Parameters live in one flat vector, per layer: weights (out x in,
/// row-major), then biases. Keeps the optimizer and finite-difference
/// checks trivial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub negative_slope: f64,
    pub params: Vec<f64>,
}

impl MlpModel {
    /// Seeded fan-in initialization for sizes `[d_in, hidden.., 1]`.
    pub fn new(layer_sizes: Vec<usize>, seed: u64) -> Result<Self, ModelError> {
        if layer_sizes.len() < 2 || *layer_sizes.last().unwrap() != 1 {
            return Err(ModelError::ShapeMismatch(format!(
                "layer sizes must end in an output of 1, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.len() - 2 > MAX_HIDDEN_LAYERS {
            return Err(ModelError::ShapeMismatch(format!(
                "at most {MAX_HIDDEN_LAYERS} hidden layers, got {}",
                layer_sizes.len() - 2
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(ModelError::ShapeMismatch("zero-width layer".into()));
        }
        let mut rng = stream_rng(seed, "mlp-init");
        let mut params = Vec::with_capacity(Self::param_count(&layer_sizes));
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            init_fan_in(&mut rng, fan_in, fan_in * fan_out, &mut params);
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(Self {
            layer_sizes,
            negative_slope: DEFAULT_NEGATIVE_SLOPE,
            params,
        })
    }

    pub fn param_count(layer_sizes: &[usize]) -> usize {
        layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn n_hidden(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    /// Offset of layer `l`'s weights and biases in `params`.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for k in 0..l {
            off += self.layer_sizes[k] * self.layer_sizes[k + 1] + self.layer_sizes[k + 1];
        }
        (off, off + self.layer_sizes[l] * self.layer_sizes[l + 1])
    }

    fn affine(&self, l: usize, input: &[f64], out: &mut Vec<f64>) {
        let (w_off, b_off) = self.offsets(l);
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        out.clear();
        for o in 0..n_out {
            let row = &self.params[w_off + o * n_in..w_off + (o + 1) * n_in];
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
                + self.params[b_off + o];
            out.push(z);
        }
    }

    /// Output probability for one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.layer_sizes[0] {
            return Err(ModelError::ShapeMismatch(format!(
                "input length {} vs expected {}",
                x.len(),
                self.layer_sizes[0]
            )));
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let n_layers = self.layer_sizes.len() - 1;
        for l in 0..n_layers {
            self.affine(l, &cur, &mut next);
            if l + 1 < n_layers {
                for z in next.iter_mut() {
                    *z = leaky_relu(*z, self.negative_slope);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(sigmoid(cur[0]))
    }

    /// Negate the output layer, flipping the decision logit's sign.
    pub fn negate_output_layer(&mut self) {
        let l = self.layer_sizes.len() - 2;
        let (w_off, _) = self.offsets(l);
        for p in self.params[w_off..].iter_mut() {
            *p = -*p;
        }
    }

    /// Loss gradient for one sample, accumulated into `grad`; returns the
    /// sample's BCE loss.
    fn accumulate_gradient(&self, x: &[f64], y: f64, grad: &mut [f64]) -> f64 {
        let n_layers = self.layer_sizes.len() - 1;
        // Forward pass, keeping pre-activations and activations per layer.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        let mut pres: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        acts.push(x.to_vec());
        for l in 0..n_layers {
            let mut z = Vec::new();
            self.affine(l, &acts[l], &mut z);
            pres.push(z.clone());
            if l + 1 < n_layers {
                for v in z.iter_mut() {
                    *v = leaky_relu(*v, self.negative_slope);
                }
            }
            acts.push(z);
        }
        let p = sigmoid(pres[n_layers - 1][0]);
        let loss = bce(p, y);

        // Backward pass; sigmoid + BCE collapse to (p - y) at the output.
        let mut delta = vec![p - y];
        for l in (0..n_layers).rev() {
            let (w_off, b_off) = self.offsets(l);
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let input = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                let row = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
                grad[b_off + o] += d;
            }
            if l > 0 {
                let mut prev = vec![0.0f64; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &self.params[w_off + o * n_in..w_off + (o + 1) * n_in];
                    for (p_d, w) in prev.iter_mut().zip(row) {
                        *p_d += d * w;
                    }
                }
                for (pd, z) in prev.iter_mut().zip(&pres[l - 1]) {
                    *pd *= leaky_relu_grad(*z, self.negative_slope);
                }
                delta = prev;
            }
        }
        loss
    }

    /// Mean loss and gradient over a batch (both divided by batch size).
    pub fn batch_loss_and_gradient(&self, xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        self.batch_gradient(xs, ys)
    }

    fn batch_gradient(&self, xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        // Fixed-size chunks merged in order: bit-identical results
        // independent of the worker schedule.
        let chunks: Vec<(f64, Vec<f64>)> = xs
            .par_chunks(16)
            .zip(ys.par_chunks(16))
            .map(|(cx, cy)| {
                let mut grad = vec![0.0f64; self.params.len()];
                let mut loss = 0.0;
                for (x, &y) in cx.iter().zip(cy) {
                    loss += self.accumulate_gradient(x, y, &mut grad);
                }
                (loss, grad)
            })
            .collect();
        let mut grad = vec![0.0f64; self.params.len()];
        let mut loss = 0.0;
        for (l, g) in chunks {
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let inv = 1.0 / xs.len() as f64;
        loss *= inv;
        for g in grad.iter_mut() {
            *g *= inv;
        }
        (loss, grad)
    }

    /// Mean BCE over a dataset.
    pub fn mean_loss(&self, xs: &[Vec<f64>], ys: &[bool]) -> Result<f64, ModelError> {
        if xs.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let total: f64 = xs
            .par_iter()
            .zip(ys.par_iter())
            .map(|(x, &y)| self.forward(x).map(|p| bce(p, f64::from(u8::from(y)))))
            .try_reduce(|| 0.0, |a, b| Ok(a + b))?;
        Ok(total / xs.len() as f64)
    }
}

/// Per-epoch record of a gradient training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub train_loss: Vec<f64>,
    pub test_loss: Vec<f64>,
    /// Epoch (0-based) whose snapshot was kept.
    pub best_epoch: usize,
}

/// Train by mini-batch Adam on BCE; after every epoch the test loss is
/// measured and the parameter snapshot with the lowest test loss is the
/// one returned.
pub fn mlp_train(
    train_x: &[Vec<f64>],
    train_y: &[bool],
    test_x: &[Vec<f64>],
    test_y: &[bool],
    n_hidden: usize,
    hidden_width: usize,
    seed: u64,
    tp: &TrainParams,
) -> Result<(MlpModel, TrainLog), ModelError> {
    if train_x.is_empty() || test_x.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let d = train_x[0].len();
    let mut sizes = vec![d];
    sizes.extend(std::iter::repeat(hidden_width).take(n_hidden));
    sizes.push(1);
    let mut model = MlpModel::new(sizes, seed)?;

    let ys: Vec<f64> = train_y.iter().map(|&b| f64::from(u8::from(b))).collect();
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut shuffle_rng = stream_rng(seed, "mlp-shuffle");
    let mut opt = Adam::new(model.params.len(), tp.learning_rate);

    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut log = TrainLog {
        train_loss: Vec::new(),
        test_loss: Vec::new(),
        best_epoch: 0,
    };

    for epoch in 0..tp.max_epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(tp.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train_x[i].as_slice()).collect();
            let ys_b: Vec<f64> = batch.iter().map(|&i| ys[i]).collect();
            let (loss, grad) = model.batch_gradient(&xs, &ys_b);
            epoch_loss += loss * xs.len() as f64;
            opt.step(&mut model.params, &grad);
        }
        epoch_loss /= train_x.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(ModelError::DivergedLoss { epoch });
        }
        let test_loss = model.mean_loss(test_x, test_y)?;
        log.train_loss.push(epoch_loss);
        log.test_loss.push(test_loss);
        if test_loss < best_loss {
            best_loss = test_loss;
            best = model.clone();
            log.best_epoch = epoch;
        }
    }
    Ok((best, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::logreg::{logreg_predict, LogregModel};
    use approx::assert_relative_eq;

    #[test]
    fn zero_hidden_layers_equals_logistic_regression() {
        let mut mlp = MlpModel::new(vec![3, 1], 5).unwrap();
        mlp.params = vec![0.4, -0.2, 1.1, 0.3]; // weights then bias
        let lr = LogregModel {
            weights: vec![0.4, -0.2, 1.1],
            bias: 0.3,
            reg: 0.0,
        };
        let x = [0.5, -1.0, 2.0];
        assert_relative_eq!(mlp.forward(&x).unwrap(), logreg_predict(&lr, &x));
    }

    #[test]
    fn zero_input_zero_bias_gives_half() {
        let mut m = MlpModel::new(vec![4, 3, 1], 1).unwrap();
        // Zero all biases; activations of zero input stay zero.
        for l in 0..2 {
            let (_, b_off) = m.offsets(l);
            let n_out = m.layer_sizes[l + 1];
            for b in &mut m.params[b_off..b_off + n_out] {
                *b = 0.0;
            }
        }
        assert_eq!(m.forward(&[0.0; 4]).unwrap(), 0.5);
    }

    #[test]
    fn rejects_too_many_hidden_layers_and_bad_input() {
        assert!(MlpModel::new(vec![8, 4, 4, 4, 4, 4, 1], 0).is_err());
        let m = MlpModel::new(vec![8, 1], 0).unwrap();
        assert!(matches!(m.forward(&[0.0; 7]), Err(ModelError::ShapeMismatch(_))));
    }

    #[test]
    fn backprop_matches_central_finite_differences() {
        let model = MlpModel::new(vec![8, 5, 1], 123).unwrap();
        let mut rng = crate::rng::stream_rng(7, "mlp-gradcheck");
        use rand::Rng;
        let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let ys = [1.0, 0.0, 1.0, 0.0];

        let x_refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let (_, grad) = model.batch_gradient(&x_refs, &ys);

        let eps = 1e-5;
        let mut max_rel = 0.0f64;
        for p in 0..model.params.len() {
            let mut plus = model.clone();
            plus.params[p] += eps;
            let mut minus = model.clone();
            minus.params[p] -= eps;
            let (lp, _) = plus.batch_gradient(&x_refs, &ys);
            let (lm, _) = minus.batch_gradient(&x_refs, &ys);
            let num = (lp - lm) / (2.0 * eps);
            let rel = (num - grad[p]).abs() / num.abs().max(grad[p].abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    #[test]
    fn logit_sign_symmetry() {
        let m = MlpModel::new(vec![6, 4, 1], 9).unwrap();
        let mut neg = m.clone();
        neg.negate_output_layer();
        let x: Vec<f64> = (0..6).map(|i| (i as f64) * 0.3 - 1.0).collect();
        let p = m.forward(&x).unwrap();
        let q = neg.forward(&x).unwrap();
        assert_relative_eq!(p + q, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn training_learns_a_separable_rule_and_loss_decreases() {
        let mut rng = crate::rng::stream_rng(3, "mlp-train-test");
        use rand::Rng;
        let make = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> (Vec<Vec<f64>>, Vec<bool>) {
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let ys = xs.iter().map(|x| x[0] + x[1] > 0.0).collect();
            (xs, ys)
        };
        let (tx, ty) = make(&mut rng, 200);
        let (vx, vy) = make(&mut rng, 50);
        let tp = TrainParams {
            max_epochs: 50,
            learning_rate: 1e-2,
            ..TrainParams::default()
        };
        let (m, log) = mlp_train(&tx, &ty, &vx, &vy, 1, 8, 11, &tp).unwrap();
        // Loss goes down over the first epochs on separable data.
        assert!(log.train_loss[4] < log.train_loss[0]);
        let acc = vx
            .iter()
            .zip(&vy)
            .filter(|(x, &y)| (m.forward(x).unwrap() > 0.5) == y)
            .count() as f64
            / vx.len() as f64;
        assert!(acc > 0.9, "validation accuracy {acc}");
        assert!(log.best_epoch < 50);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let xs: Vec<Vec<f64>> = (0..32).map(|i| vec![(i % 7) as f64, (i % 3) as f64]).collect();
        let ys: Vec<bool> = (0..32).map(|i| i % 2 == 0).collect();
        let tp = TrainParams {
            max_epochs: 5,
            ..TrainParams::default()
        };
        let (a, _) = mlp_train(&xs, &ys, &xs, &ys, 2, 6, 77, &tp).unwrap();
        let (b, _) = mlp_train(&xs, &ys, &xs, &ys, 2, 6, 77, &tp).unwrap();
        assert_eq!(a.params, b.params);
    }
}
