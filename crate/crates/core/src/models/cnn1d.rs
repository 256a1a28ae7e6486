//! 1D convolutional network on raw vibration windows.
//!
//! Architecture: `N_conv` blocks of (same-padding conv, batch norm,
//! LeakyReLU, max pool), then one fully connected layer and a single
//! sigmoid output node. Batch norm uses batch statistics while training
//! and running averages at inference.

use serde::{Deserialize, Serialize};

use super::nn::{bce, init_fan_in, leaky_relu, leaky_relu_grad, sigmoid, Adam, TrainParams};
use super::ModelError;
use crate::rng::stream_rng;
use crate::WINDOW_LEN;

/// Shape of a CNN: everything except the learned parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub input_len: usize,
    pub n_conv: usize,
    pub kernel: usize,
    /// Channels of the first block; each further block doubles.
    pub base_channels: usize,
    pub pool: usize,
    pub fc_width: usize,
}

impl CnnConfig {
    /// Stock shape for one-second windows.
    pub fn for_windows(n_conv: usize) -> Self {
        Self {
            input_len: WINDOW_LEN,
            n_conv,
            kernel: 9,
            base_channels: 16,
            pool: 4,
            fc_width: 64,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct BlockShape {
    ch_in: usize,
    ch_out: usize,
    len_in: usize,
    /// Length after the max pool.
    len_out: usize,
}

#[derive(Debug, Clone, Copy)]
struct BlockOffsets {
    w: usize,
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cnn1dModel {
    pub config: CnnConfig,
    pub negative_slope: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    /// Optimizer-visible parameters: per block conv weights
    /// (out x in x k), batch-norm gamma and beta; then the FC layer and
    /// the output node.
    pub params: Vec<f64>,
    /// Batch-norm running statistics, per block and channel; updated
    /// during training, used at inference.
    pub running_mean: Vec<Vec<f64>>,
    pub running_var: Vec<Vec<f64>>,
}

impl Cnn1dModel {
    pub fn new(config: CnnConfig, seed: u64) -> Result<Self, ModelError> {
        if config.n_conv == 0 || config.kernel == 0 || config.pool == 0 || config.fc_width == 0 {
            return Err(ModelError::ShapeMismatch("zero-sized CNN dimension".into()));
        }
        let shapes = Self::shapes(&config)?;
        let mut rng = stream_rng(seed, "cnn-init");
        let mut params = Vec::new();
        for s in &shapes {
            let fan_in = s.ch_in * config.kernel;
            init_fan_in(&mut rng, fan_in, s.ch_out * fan_in, &mut params);
            params.extend(std::iter::repeat(1.0).take(s.ch_out)); // gamma
            params.extend(std::iter::repeat(0.0).take(s.ch_out)); // beta
        }
        let flat = Self::flat_len(&shapes);
        init_fan_in(&mut rng, flat, config.fc_width * flat, &mut params);
        params.extend(std::iter::repeat(0.0).take(config.fc_width)); // fc bias
        init_fan_in(&mut rng, config.fc_width, config.fc_width, &mut params);
        params.push(0.0); // output bias

        Ok(Self {
            config,
            negative_slope: super::mlp::DEFAULT_NEGATIVE_SLOPE,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            params,
            running_mean: shapes.iter().map(|s| vec![0.0; s.ch_out]).collect(),
            running_var: shapes.iter().map(|s| vec![1.0; s.ch_out]).collect(),
        })
    }

    fn shapes(config: &CnnConfig) -> Result<Vec<BlockShape>, ModelError> {
        let mut shapes = Vec::with_capacity(config.n_conv);
        let mut len = config.input_len;
        let mut ch_in = 1usize;
        for b in 0..config.n_conv {
            let ch_out = config.base_channels << b;
            let len_out = len / config.pool;
            if len_out == 0 {
                return Err(ModelError::ShapeMismatch(format!(
                    "block {b} pools length {len} below one sample"
                )));
            }
            shapes.push(BlockShape { ch_in, ch_out, len_in: len, len_out });
            ch_in = ch_out;
            len = len_out;
        }
        Ok(shapes)
    }

    fn flat_len(shapes: &[BlockShape]) -> usize {
        let last = shapes.last().unwrap();
        last.ch_out * last.len_out
    }

    fn offsets(&self) -> (Vec<BlockOffsets>, usize, usize, usize, usize) {
        let shapes = Self::shapes(&self.config).expect("validated at construction");
        let mut off = 0;
        let mut blocks = Vec::with_capacity(shapes.len());
        for s in &shapes {
            let w = off;
            off += s.ch_out * s.ch_in * self.config.kernel;
            let gamma = off;
            off += s.ch_out;
            let beta = off;
            off += s.ch_out;
            blocks.push(BlockOffsets { w, gamma, beta });
        }
        let flat = Self::flat_len(&shapes);
        let fc_w = off;
        off += self.config.fc_width * flat;
        let fc_b = off;
        off += self.config.fc_width;
        let out_w = off;
        off += self.config.fc_width;
        let out_b = off;
        (blocks, fc_w, fc_b, out_w, out_b)
    }

    /// Same-padding convolution: `out[o][t] = sum_{i,k} w[o][i][k] * x[i][t+k-pad]`.
    fn conv_forward(&self, x: &[f64], s: BlockShape, w: &[f64], out: &mut Vec<f64>) {
        let k = self.config.kernel;
        let pad = k / 2;
        let len = s.len_in;
        out.clear();
        out.resize(s.ch_out * len, 0.0);
        for o in 0..s.ch_out {
            for i in 0..s.ch_in {
                let w_row = &w[(o * s.ch_in + i) * k..(o * s.ch_in + i + 1) * k];
                let x_row = &x[i * len..(i + 1) * len];
                let o_row = &mut out[o * len..(o + 1) * len];
                for (kk, &wv) in w_row.iter().enumerate() {
                    if wv == 0.0 {
                        continue;
                    }
                    // t + kk - pad must land in 0..len
                    let t_lo = pad.saturating_sub(kk);
                    let t_hi = (len + pad).saturating_sub(kk).min(len);
                    for t in t_lo..t_hi {
                        o_row[t] += wv * x_row[t + kk - pad];
                    }
                }
            }
        }
    }

    /// Inference-mode forward for one window: batch norm uses running stats.
    pub fn forward(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.config.input_len {
            return Err(ModelError::ShapeMismatch(format!(
                "input length {} vs expected {}",
                x.len(),
                self.config.input_len
            )));
        }
        let shapes = Self::shapes(&self.config).expect("validated");
        let (blocks, fc_w, fc_b, out_w, out_b) = self.offsets();
        let mut cur = x.to_vec();
        let mut conv = Vec::new();
        for (b, s) in shapes.iter().enumerate() {
            let off = blocks[b];
            self.conv_forward(&cur, *s, &self.params[off.w..], &mut conv);
            // bn + activation + pool
            let mut pooled = vec![0.0f64; s.ch_out * s.len_out];
            for c in 0..s.ch_out {
                let gamma = self.params[off.gamma + c];
                let beta = self.params[off.beta + c];
                let inv = 1.0 / (self.running_var[b][c] + self.bn_eps).sqrt();
                let mean = self.running_mean[b][c];
                let row = &mut conv[c * s.len_in..(c + 1) * s.len_in];
                for v in row.iter_mut() {
                    *v = leaky_relu(gamma * (*v - mean) * inv + beta, self.negative_slope);
                }
                for t in 0..s.len_out {
                    let seg = &row[t * self.config.pool..(t + 1) * self.config.pool];
                    pooled[c * s.len_out + t] = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                }
            }
            cur = pooled;
        }
        // FC + output node
        let flat = cur.len();
        let mut logit_in = vec![0.0f64; self.config.fc_width];
        for h in 0..self.config.fc_width {
            let row = &self.params[fc_w + h * flat..fc_w + (h + 1) * flat];
            let z: f64 =
                row.iter().zip(&cur).map(|(w, v)| w * v).sum::<f64>() + self.params[fc_b + h];
            logit_in[h] = leaky_relu(z, self.negative_slope);
        }
        let logit: f64 = self.params[out_w..out_w + self.config.fc_width]
            .iter()
            .zip(&logit_in)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.params[out_b];
        Ok(sigmoid(logit))
    }

    /// Negate the output node, flipping the decision logit's sign.
    pub fn negate_output_layer(&mut self) {
        let (_, _, _, out_w, out_b) = self.offsets();
        for p in self.params[out_w..=out_b].iter_mut() {
            *p = -*p;
        }
    }
}

/// Everything the backward pass needs from a training-mode forward pass.
struct BatchCache {
    /// Per block: input activations of each sample.
    inputs: Vec<Vec<Vec<f64>>>,
    /// Per block: normalized pre-scale values `xhat` of each sample.
    xhats: Vec<Vec<Vec<f64>>>,
    /// Per block: post-BN pre-activation values of each sample.
    pre_acts: Vec<Vec<Vec<f64>>>,
    /// Per block: argmax source index of every pooled cell.
    pool_src: Vec<Vec<Vec<usize>>>,
    /// Per block, per channel: batch mean and biased variance.
    batch_mean: Vec<Vec<f64>>,
    batch_var: Vec<Vec<f64>>,
    /// Flattened features and FC intermediates per sample.
    flats: Vec<Vec<f64>>,
    fc_pre: Vec<Vec<f64>>,
    fc_act: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl Cnn1dModel {
    /// Training-mode forward over a whole batch (batch-norm statistics are
    /// computed per channel over batch x positions). Pure: running stats
    /// are kept in the cache, not applied to the model.
    fn train_forward(&self, batch: &[&[f64]]) -> BatchCache {
        let shapes = Self::shapes(&self.config).expect("validated");
        let (blocks, fc_w_off, fc_b_off, out_w_off, out_b_off) = self.offsets();
        let n = batch.len();
        let mut cache = BatchCache {
            inputs: Vec::with_capacity(shapes.len()),
            xhats: Vec::with_capacity(shapes.len()),
            pre_acts: Vec::with_capacity(shapes.len()),
            pool_src: Vec::with_capacity(shapes.len()),
            batch_mean: Vec::with_capacity(shapes.len()),
            batch_var: Vec::with_capacity(shapes.len()),
            flats: Vec::with_capacity(n),
            fc_pre: Vec::with_capacity(n),
            fc_act: Vec::with_capacity(n),
            probs: Vec::with_capacity(n),
        };

        let mut cur: Vec<Vec<f64>> = batch.iter().map(|x| x.to_vec()).collect();
        for (b, s) in shapes.iter().enumerate() {
            let off = blocks[b];
            let conv: Vec<Vec<f64>> = cur
                .iter()
                .map(|x| {
                    let mut out = Vec::new();
                    self.conv_forward(x, *s, &self.params[off.w..], &mut out);
                    out
                })
                .collect();

            // Per-channel batch statistics over all samples and positions.
            let m = (n * s.len_in) as f64;
            let mut mean = vec![0.0f64; s.ch_out];
            let mut var = vec![0.0f64; s.ch_out];
            for z in &conv {
                for c in 0..s.ch_out {
                    for &v in &z[c * s.len_in..(c + 1) * s.len_in] {
                        mean[c] += v;
                    }
                }
            }
            for v in mean.iter_mut() {
                *v /= m;
            }
            for z in &conv {
                for c in 0..s.ch_out {
                    for &v in &z[c * s.len_in..(c + 1) * s.len_in] {
                        let d = v - mean[c];
                        var[c] += d * d;
                    }
                }
            }
            for v in var.iter_mut() {
                *v /= m;
            }

            let mut xhats = Vec::with_capacity(n);
            let mut pre_acts = Vec::with_capacity(n);
            let mut pool_src = Vec::with_capacity(n);
            let mut pooled_all = Vec::with_capacity(n);
            for z in &conv {
                let mut xhat = vec![0.0f64; s.ch_out * s.len_in];
                let mut pre = vec![0.0f64; s.ch_out * s.len_in];
                let mut pooled = vec![0.0f64; s.ch_out * s.len_out];
                let mut src = vec![0usize; s.ch_out * s.len_out];
                for c in 0..s.ch_out {
                    let gamma = self.params[off.gamma + c];
                    let beta = self.params[off.beta + c];
                    let inv = 1.0 / (var[c] + self.bn_eps).sqrt();
                    for t in 0..s.len_in {
                        let idx = c * s.len_in + t;
                        let xh = (z[idx] - mean[c]) * inv;
                        xhat[idx] = xh;
                        pre[idx] = gamma * xh + beta;
                    }
                    for t in 0..s.len_out {
                        let base = c * s.len_in + t * self.config.pool;
                        let mut best = base;
                        let mut best_v = leaky_relu(pre[base], self.negative_slope);
                        for u in 1..self.config.pool {
                            let v = leaky_relu(pre[base + u], self.negative_slope);
                            if v > best_v {
                                best_v = v;
                                best = base + u;
                            }
                        }
                        pooled[c * s.len_out + t] = best_v;
                        src[c * s.len_out + t] = best;
                    }
                }
                xhats.push(xhat);
                pre_acts.push(pre);
                pool_src.push(src);
                pooled_all.push(pooled);
            }

            cache.inputs.push(std::mem::take(&mut cur));
            cache.xhats.push(xhats);
            cache.pre_acts.push(pre_acts);
            cache.pool_src.push(pool_src);
            cache.batch_mean.push(mean);
            cache.batch_var.push(var);
            cur = pooled_all;
        }

        // FC head.
        let flat = cur[0].len();
        for x in cur.into_iter() {
            let mut pre = vec![0.0f64; self.config.fc_width];
            let mut act = vec![0.0f64; self.config.fc_width];
            for h in 0..self.config.fc_width {
                let row = &self.params[fc_w_off + h * flat..fc_w_off + (h + 1) * flat];
                let z: f64 = row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>()
                    + self.params[fc_b_off + h];
                pre[h] = z;
                act[h] = leaky_relu(z, self.negative_slope);
            }
            let logit: f64 = self.params[out_w_off..out_w_off + self.config.fc_width]
                .iter()
                .zip(&act)
                .map(|(w, v)| w * v)
                .sum::<f64>()
                + self.params[out_b_off];
            let p = sigmoid(logit);
            cache.flats.push(x);
            cache.fc_pre.push(pre);
            cache.fc_act.push(act);
            cache.probs.push(p);
        }
        cache
    }

    /// Batch loss and gradient in training mode (batch-norm on batch
    /// statistics), without side effects.
    pub fn batch_loss_and_gradient(&self, batch: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        let (loss, grad, _) = self.batch_gradient(batch, ys);
        (loss, grad)
    }

    fn batch_gradient(&self, batch: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>, BatchCache) {
        let shapes = Self::shapes(&self.config).expect("validated");
        let (blocks, fc_w_off, fc_b_off, out_w_off, out_b_off) = self.offsets();
        let cache = self.train_forward(batch);
        let n = batch.len();
        let inv_n = 1.0 / n as f64;
        let loss: f64 = cache
            .probs
            .iter()
            .zip(ys)
            .map(|(&p, &y)| bce(p, y))
            .sum::<f64>()
            * inv_n;

        let mut grad = vec![0.0f64; self.params.len()];
        let flat = cache.flats[0].len();

        // Head backward; deltas into the flattened features per sample.
        let mut delta_flat: Vec<Vec<f64>> = vec![vec![0.0; flat]; n];
        for i in 0..n {
            let d_logit = (cache.probs[i] - ys[i]) * inv_n;
            grad[out_b_off] += d_logit;
            for h in 0..self.config.fc_width {
                grad[out_w_off + h] += d_logit * cache.fc_act[i][h];
            }
            for h in 0..self.config.fc_width {
                let d_act = d_logit * self.params[out_w_off + h];
                let d_pre = d_act * leaky_relu_grad(cache.fc_pre[i][h], self.negative_slope);
                grad[fc_b_off + h] += d_pre;
                let g_row = &mut grad[fc_w_off + h * flat..fc_w_off + (h + 1) * flat];
                for (g, v) in g_row.iter_mut().zip(&cache.flats[i]) {
                    *g += d_pre * v;
                }
                let w_row = &self.params[fc_w_off + h * flat..fc_w_off + (h + 1) * flat];
                for (d, w) in delta_flat[i].iter_mut().zip(w_row) {
                    *d += d_pre * w;
                }
            }
        }

        // Blocks backward, last to first.
        let mut delta_pooled = delta_flat;
        for (b, s) in shapes.iter().enumerate().rev() {
            let off = blocks[b];
            let m = (n * s.len_in) as f64;

            // Un-pool and un-activate into post-BN pre-activation deltas.
            let mut delta_pre: Vec<Vec<f64>> = vec![vec![0.0; s.ch_out * s.len_in]; n];
            for i in 0..n {
                for cell in 0..s.ch_out * s.len_out {
                    let srcv = cache.pool_src[b][i][cell];
                    let d = delta_pooled[i][cell];
                    delta_pre[i][srcv] +=
                        d * leaky_relu_grad(cache.pre_acts[b][i][srcv], self.negative_slope);
                }
            }

            // Batch-norm backward per channel.
            let mut delta_conv: Vec<Vec<f64>> = vec![vec![0.0; s.ch_out * s.len_in]; n];
            for c in 0..s.ch_out {
                let gamma = self.params[off.gamma + c];
                let inv = 1.0 / (cache.batch_var[b][c] + self.bn_eps).sqrt();
                let mut sum_d = 0.0f64;
                let mut sum_dx = 0.0f64;
                for i in 0..n {
                    for t in 0..s.len_in {
                        let idx = c * s.len_in + t;
                        let d = delta_pre[i][idx];
                        sum_d += d;
                        sum_dx += d * cache.xhats[b][i][idx];
                    }
                }
                grad[off.beta + c] += sum_d;
                grad[off.gamma + c] += sum_dx;
                let mean_d = sum_d / m;
                let mean_dx = sum_dx / m;
                for i in 0..n {
                    for t in 0..s.len_in {
                        let idx = c * s.len_in + t;
                        delta_conv[i][idx] = gamma
                            * inv
                            * (delta_pre[i][idx] - mean_d - cache.xhats[b][i][idx] * mean_dx);
                    }
                }
            }

            // Convolution backward: weight gradients and input deltas.
            let k = self.config.kernel;
            let pad = k / 2;
            let next_delta_needed = b > 0;
            let mut delta_in: Vec<Vec<f64>> = if next_delta_needed {
                vec![vec![0.0; s.ch_in * s.len_in]; n]
            } else {
                Vec::new()
            };
            for i in 0..n {
                let x = &cache.inputs[b][i];
                for o in 0..s.ch_out {
                    let d_row = &delta_conv[i][o * s.len_in..(o + 1) * s.len_in];
                    for ci in 0..s.ch_in {
                        let x_row = &x[ci * s.len_in..(ci + 1) * s.len_in];
                        let g_row = &mut grad
                            [off.w + (o * s.ch_in + ci) * k..off.w + (o * s.ch_in + ci + 1) * k];
                        for (kk, g) in g_row.iter_mut().enumerate() {
                            let t_lo = pad.saturating_sub(kk);
                            let t_hi = (s.len_in + pad).saturating_sub(kk).min(s.len_in);
                            let mut acc = 0.0;
                            for t in t_lo..t_hi {
                                acc += d_row[t] * x_row[t + kk - pad];
                            }
                            *g += acc;
                        }
                        if next_delta_needed {
                            let w_row = &self.params
                                [off.w + (o * s.ch_in + ci) * k..off.w + (o * s.ch_in + ci + 1) * k];
                            let di_row =
                                &mut delta_in[i][ci * s.len_in..(ci + 1) * s.len_in];
                            for (kk, &wv) in w_row.iter().enumerate() {
                                if wv == 0.0 {
                                    continue;
                                }
                                let t_lo = pad.saturating_sub(kk);
                                let t_hi = (s.len_in + pad).saturating_sub(kk).min(s.len_in);
                                for t in t_lo..t_hi {
                                    di_row[t + kk - pad] += wv * d_row[t];
                                }
                            }
                        }
                    }
                }
            }
            // Deltas entering this block become the pooled-output deltas of
            // the previous block.
            delta_pooled = delta_in;
        }

        (loss, grad, cache)
    }

    /// Mean BCE in inference mode (running batch-norm statistics).
    pub fn mean_loss(&self, xs: &[Vec<f64>], ys: &[bool]) -> Result<f64, ModelError> {
        if xs.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            total += bce(self.forward(x)?, f64::from(u8::from(y)));
        }
        Ok(total / xs.len() as f64)
    }
}

/// Train by mini-batch Adam on BCE with the best-on-test snapshot rule.
pub fn cnn_train(
    train_x: &[Vec<f64>],
    train_y: &[bool],
    test_x: &[Vec<f64>],
    test_y: &[bool],
    config: CnnConfig,
    seed: u64,
    tp: &TrainParams,
) -> Result<(Cnn1dModel, super::mlp::TrainLog), ModelError> {
    if train_x.is_empty() || test_x.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let mut model = Cnn1dModel::new(config, seed)?;
    let ys: Vec<f64> = train_y.iter().map(|&b| f64::from(u8::from(b))).collect();
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut shuffle_rng = stream_rng(seed, "cnn-shuffle");
    let mut opt = Adam::new(model.params.len(), tp.learning_rate);

    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut log = super::mlp::TrainLog {
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
            let (loss, grad, cache) = model.batch_gradient(&xs, &ys_b);
            epoch_loss += loss * xs.len() as f64;
            opt.step(&mut model.params, &grad);
            // Exponential running stats for inference-time batch norm.
            for b in 0..model.running_mean.len() {
                for c in 0..model.running_mean[b].len() {
                    model.running_mean[b][c] = (1.0 - model.bn_momentum)
                        * model.running_mean[b][c]
                        + model.bn_momentum * cache.batch_mean[b][c];
                    model.running_var[b][c] = (1.0 - model.bn_momentum) * model.running_var[b][c]
                        + model.bn_momentum * cache.batch_var[b][c];
                }
            }
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
    use approx::assert_relative_eq;

    fn tiny_config() -> CnnConfig {
        CnnConfig {
            input_len: 32,
            n_conv: 1,
            kernel: 3,
            base_channels: 2,
            pool: 2,
            fc_width: 4,
        }
    }

    #[test]
    fn forward_output_is_a_probability() {
        let m = Cnn1dModel::new(tiny_config(), 3).unwrap();
        let x: Vec<f64> = (0..32).map(|i| (i as f64 * 0.7).sin() * 10.0).collect();
        let p = m.forward(&x).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn zero_conv_weights_make_output_constant() {
        let mut m = Cnn1dModel::new(tiny_config(), 3).unwrap();
        let (blocks, _, _, _, _) = m.offsets();
        let s = Cnn1dModel::shapes(&m.config).unwrap()[0];
        let n_w = s.ch_out * s.ch_in * m.config.kernel;
        for p in m.params[blocks[0].w..blocks[0].w + n_w].iter_mut() {
            *p = 0.0;
        }
        let a = m.forward(&vec![1.0; 32]).unwrap();
        let b = m.forward(&(0..32).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn rejects_wrong_input_length() {
        let m = Cnn1dModel::new(tiny_config(), 3).unwrap();
        assert!(matches!(m.forward(&[0.0; 31]), Err(ModelError::ShapeMismatch(_))));
    }

    #[test]
    fn rejects_overdeep_pooling() {
        let cfg = CnnConfig {
            input_len: 8,
            n_conv: 4,
            kernel: 3,
            base_channels: 2,
            pool: 2,
            fc_width: 2,
        };
        assert!(Cnn1dModel::new(cfg, 0).is_err());
    }

    #[test]
    fn backprop_matches_central_finite_differences() {
        let model = Cnn1dModel::new(tiny_config(), 17).unwrap();
        let mut rng = crate::rng::stream_rng(29, "cnn-gradcheck");
        use rand::Rng;
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ys = [1.0, 0.0, 1.0];
        let x_refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let (_, grad, _) = model.batch_gradient(&x_refs, &ys);

        let eps = 1e-5;
        let mut max_rel = 0.0f64;
        for p in 0..model.params.len() {
            let mut plus = model.clone();
            plus.params[p] += eps;
            let mut minus = model.clone();
            minus.params[p] -= eps;
            let (lp, _, _) = plus.batch_gradient(&x_refs, &ys);
            let (lm, _, _) = minus.batch_gradient(&x_refs, &ys);
            let num = (lp - lm) / (2.0 * eps);
            let rel = (num - grad[p]).abs() / num.abs().max(grad[p].abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-3, "max relative gradient error {max_rel}");
    }

    #[test]
    fn logit_sign_symmetry() {
        let m = Cnn1dModel::new(tiny_config(), 21).unwrap();
        let mut neg = m.clone();
        neg.negate_output_layer();
        let x: Vec<f64> = (0..32).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let p = m.forward(&x).unwrap();
        let q = neg.forward(&x).unwrap();
        assert_relative_eq!(p + q, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn training_separates_tones_and_is_deterministic() {
        use std::f64::consts::TAU;
        let make = |freq: f64, phase: f64| -> Vec<f64> {
            (0..32).map(|i| (TAU * freq * i as f64 / 32.0 + phase).sin()).collect()
        };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for j in 0..24 {
            let phase = j as f64 * 0.4;
            xs.push(make(2.0, phase));
            ys.push(false);
            xs.push(make(7.0, phase));
            ys.push(true);
        }
        let tp = TrainParams {
            max_epochs: 30,
            batch_size: 8,
            learning_rate: 5e-3,
        };
        let (m, log) = cnn_train(&xs, &ys, &xs, &ys, tiny_config(), 5, &tp).unwrap();
        assert!(log.train_loss[4] < log.train_loss[0]);
        let acc = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| (m.forward(x).unwrap() > 0.5) == y)
            .count() as f64
            / xs.len() as f64;
        assert!(acc > 0.9, "train accuracy {acc}");

        let (m2, _) = cnn_train(&xs, &ys, &xs, &ys, tiny_config(), 5, &tp).unwrap();
        assert_eq!(m.params, m2.params);
        assert_eq!(m.running_mean, m2.running_mean);
    }
}
