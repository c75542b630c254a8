//! Prediction head.
//!
//! ```text
//!  step inputs (T × in_width)
//!     │  edge left-pad to a multiple of the stride
//!     ▼
//!  patch conv (kernel = stride = 32) ─► batch norm ─► GELU      InputProjection
//!     │  one hidden_dim token per patch
//!     ▼
//!  reservoir (remote LLM, or identity for the full-chain check)
//!     │  k states e_1..e_k
//!     ▼
//!  P = W2 · mean_j GELU(W1 e_j + b1) + b2                         PostHead
//! ```
//!
//! The post head pools after the nonlinearity so that `∂P_i/∂e_j` depends
//! on the token `j`.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::nn::{gelu, gelu_grad, Linear};
use crate::tensor::{axpy, l2_norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub kernel: usize,
    pub stride: usize,
    /// Width of the reservoir tokens; taken from the service when it is remote.
    pub hidden_dim: usize,
    pub head_dim: usize,
    pub pred_len: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            kernel: 32,
            stride: 32,
            hidden_dim: 64,
            head_dim: 128,
            pred_len: 400,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.hidden_dim == 0 || self.head_dim == 0 || self.pred_len == 0 {
            bail!(
                Config,
                "head kernel, hidden_dim, head_dim and pred_len must be positive"
            );
        }
        if self.stride != self.kernel {
            bail!(Config, "conv stride {} must equal kernel {}", self.stride, self.kernel);
        }
        if !(self.bn_eps > 0.0) || !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            bail!(Config, "bn_eps must be positive and bn_momentum in (0, 1]");
        }
        Ok(())
    }
}

/// `Σ|p − y|` and its subgradient, with `sign(0) = 0`.
pub fn l1_loss_grad(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        bail!(
            Argument,
            "prediction length {} vs target length {}",
            pred.len(),
            target.len()
        );
    }
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, y)| {
            let d = p - y;
            loss += d.abs();
            if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps,
            momentum,
        }
    }

    /// Eval mode: a fixed per-channel affine map.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(c, v)| {
                self.gamma[c] * (v - self.running_mean[c]) / libm::sqrt(self.running_var[c] + self.eps) + self.beta[c]
            })
            .collect()
    }
}

/// Per-channel mean and biased variance over a set of rows.
fn channel_stats(rows: &[&[f64]], channels: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; channels];
    for r in rows {
        axpy(1.0 / n, r, &mut mean);
    }
    let mut var = vec![0.0; channels];
    for r in rows {
        for c in 0..channels {
            let d = r[c] - mean[c];
            var[c] += d * d / n;
        }
    }
    (mean, var)
}

/// Activations of one train-mode projection pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCache {
    /// Flattened patches per sample.
    pub patches: Vec<Vec<Vec<f64>>>,
    /// Normalized pre-affine values per sample and token.
    pub x_hat: Vec<Vec<Vec<f64>>>,
    /// Post-affine, pre-GELU values.
    pub pre_act: Vec<Vec<Vec<f64>>>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGrads {
    pub conv: Linear,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Non-overlapping patch convolution, batch norm and GELU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputProjection {
    pub kernel: usize,
    pub stride: usize,
    pub in_width: usize,
    /// `hidden × (kernel · in_width)`, patch flattened step-major.
    pub conv: Linear,
    pub bn: BatchNorm,
}

impl InputProjection {
    pub fn new(config: &HeadConfig, in_width: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if in_width == 0 {
            bail!(Config, "projection input width must be positive");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            kernel: config.kernel,
            stride: config.stride,
            in_width,
            conv: Linear::init(config.kernel * in_width, config.hidden_dim, &mut rng),
            bn: BatchNorm::new(config.hidden_dim, config.bn_eps, config.bn_momentum),
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.conv.output_dim()
    }

    pub fn n_tokens(&self, steps: usize) -> usize {
        steps.div_ceil(self.stride)
    }

    fn left_pad(&self, steps: usize) -> usize {
        self.n_tokens(steps) * self.stride - steps
    }

    /// Edge-padded, flattened patches of a step sequence.
    pub fn patches(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if x.is_empty() {
            bail!(Argument, "cannot project an empty sequence");
        }
        if let Some(bad) = x.iter().find(|r| r.len() != self.in_width) {
            bail!(
                Config,
                "projection input width {} does not match conv in_width {}",
                bad.len(),
                self.in_width
            );
        }
        let pad = self.left_pad(x.len());
        Ok((0..self.n_tokens(x.len()))
            .map(|p| {
                let mut flat = Vec::with_capacity(self.kernel * self.in_width);
                for off in 0..self.kernel {
                    let padded = p * self.stride + off;
                    flat.extend_from_slice(&x[padded.saturating_sub(pad)]);
                }
                flat
            })
            .collect())
    }

    pub fn forward_eval(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .patches(x)?
            .iter()
            .map(|p| self.bn.eval(&self.conv.forward(p)).into_iter().map(gelu).collect())
            .collect())
    }

    /// Train mode: statistics over every token of every sample in the batch.
    /// Running statistics are left untouched; see [`Self::update_running`].
    pub fn forward_train(&self, batch: &[Vec<Vec<f64>>]) -> Result<(Vec<Vec<Vec<f64>>>, ProjectionCache)> {
        if batch.is_empty() {
            bail!(Argument, "empty batch");
        }
        let h = self.hidden_dim();
        let patches: Vec<Vec<Vec<f64>>> = batch.iter().map(|x| self.patches(x)).collect::<Result<_>>()?;
        let conv_out: Vec<Vec<Vec<f64>>> = patches
            .iter()
            .map(|ps| ps.iter().map(|p| self.conv.forward(p)).collect())
            .collect();
        let rows: Vec<&[f64]> = conv_out.iter().flatten().map(Vec::as_slice).collect();
        if rows.len() < 2 {
            bail!(Argument, "train-mode batch norm needs at least two tokens");
        }
        let (mean, var) = channel_stats(&rows, h);
        let inv: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + self.bn.eps)).collect();
        let mut x_hat = Vec::with_capacity(batch.len());
        let mut pre_act = Vec::with_capacity(batch.len());
        let mut out = Vec::with_capacity(batch.len());
        for sample in &conv_out {
            let xh: Vec<Vec<f64>> = sample
                .iter()
                .map(|z| (0..h).map(|c| (z[c] - mean[c]) * inv[c]).collect())
                .collect();
            let pa: Vec<Vec<f64>> = xh
                .iter()
                .map(|t: &Vec<f64>| (0..h).map(|c| self.bn.gamma[c] * t[c] + self.bn.beta[c]).collect())
                .collect();
            out.push(
                pa.iter()
                    .map(|t: &Vec<f64>| t.iter().map(|&v| gelu(v)).collect())
                    .collect(),
            );
            x_hat.push(xh);
            pre_act.push(pa);
        }
        Ok((
            out,
            ProjectionCache {
                patches,
                x_hat,
                pre_act,
                batch_mean: mean,
                batch_var: var,
                steps: batch.iter().map(Vec::len).collect(),
            },
        ))
    }

    /// Exponential moving update with the unbiased batch variance.
    pub fn update_running(&mut self, cache: &ProjectionCache) {
        let n: usize = cache.x_hat.iter().map(Vec::len).sum();
        let unbias = n as f64 / (n as f64 - 1.0);
        let m = self.bn.momentum;
        for c in 0..self.hidden_dim() {
            self.bn.running_mean[c] = (1.0 - m) * self.bn.running_mean[c] + m * cache.batch_mean[c];
            self.bn.running_var[c] = (1.0 - m) * self.bn.running_var[c] + m * cache.batch_var[c] * unbias;
        }
    }

    /// Sets the running statistics to the exact population statistics of
    /// the conv outputs over `inputs`.
    pub fn calibrate(&mut self, inputs: &[Vec<Vec<f64>>]) -> Result<()> {
        let mut conv_out = Vec::new();
        for x in inputs {
            for p in self.patches(x)? {
                conv_out.push(self.conv.forward(&p));
            }
        }
        if conv_out.is_empty() {
            bail!(Argument, "no inputs to calibrate batch norm on");
        }
        let rows: Vec<&[f64]> = conv_out.iter().map(Vec::as_slice).collect();
        let (mean, var) = channel_stats(&rows, self.hidden_dim());
        self.bn.running_mean = mean;
        self.bn.running_var = var;
        Ok(())
    }

    /// Gradients of a train-mode pass; returns parameter gradients and
    /// `∂L/∂x` per sample and step.
    pub fn backward(&self, cache: &ProjectionCache, d_out: &[Vec<Vec<f64>>]) -> (ProjectionGrads, Vec<Vec<Vec<f64>>>) {
        let h = self.hidden_dim();
        let n: usize = cache.x_hat.iter().map(Vec::len).sum();
        let inv: Vec<f64> = cache
            .batch_var
            .iter()
            .map(|v| 1.0 / libm::sqrt(v + self.bn.eps))
            .collect();
        let mut gamma = vec![0.0; h];
        let mut beta = vec![0.0; h];
        // ∂L/∂x̂ per sample/token
        let mut dxh: Vec<Vec<Vec<f64>>> = Vec::with_capacity(d_out.len());
        let mut sum_dxh = vec![0.0; h];
        let mut sum_dxh_xh = vec![0.0; h];
        for (s, sample) in d_out.iter().enumerate() {
            let mut rows = Vec::with_capacity(sample.len());
            for (t, dy) in sample.iter().enumerate() {
                let xh = &cache.x_hat[s][t];
                let pa = &cache.pre_act[s][t];
                let row: Vec<f64> = (0..h)
                    .map(|c| {
                        let dpa = dy[c] * gelu_grad(pa[c]);
                        gamma[c] += dpa * xh[c];
                        beta[c] += dpa;
                        let d = dpa * self.bn.gamma[c];
                        sum_dxh[c] += d;
                        sum_dxh_xh[c] += d * xh[c];
                        d
                    })
                    .collect();
                rows.push(row);
            }
            dxh.push(rows);
        }
        let nf = n as f64;
        let mut conv = self.conv.zeros_like();
        let mut d_input = Vec::with_capacity(d_out.len());
        for (s, sample) in dxh.iter().enumerate() {
            let steps = cache.steps[s];
            let pad = self.left_pad(steps);
            let mut dx = vec![vec![0.0; self.in_width]; steps];
            for (t, d) in sample.iter().enumerate() {
                let xh = &cache.x_hat[s][t];
                let dz: Vec<f64> = (0..h)
                    .map(|c| inv[c] / nf * (nf * d[c] - sum_dxh[c] - xh[c] * sum_dxh_xh[c]))
                    .collect();
                let dp = self.conv.backward(&cache.patches[s][t], &dz, &mut conv);
                for off in 0..self.kernel {
                    let step = (t * self.stride + off).saturating_sub(pad);
                    axpy(1.0, &dp[off * self.in_width..(off + 1) * self.in_width], &mut dx[step]);
                }
            }
            d_input.push(dx);
        }
        (ProjectionGrads { conv, gamma, beta }, d_input)
    }
}

/// Activations of one post-head pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PostCache {
    pub states: Vec<Vec<f64>>,
    pub pre_act: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostGrads {
    pub w1: Linear,
    pub w2: Linear,
}

/// Token-wise GELU MLP, mean-pooled, then a linear map to the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostHead {
    pub w1: Linear,
    pub w2: Linear,
}

impl PostHead {
    pub fn new(config: &HeadConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            w1: Linear::init(config.hidden_dim, config.head_dim, &mut rng),
            w2: Linear::init(config.head_dim, config.pred_len, &mut rng),
        })
    }

    pub fn pred_len(&self) -> usize {
        self.w2.output_dim()
    }

    pub fn forward(&self, states: &[Vec<f64>]) -> Result<(Vec<f64>, PostCache)> {
        if states.is_empty() {
            bail!(Argument, "post head needs at least one state");
        }
        if let Some(bad) = states.iter().find(|s| s.len() != self.w1.input_dim()) {
            bail!(
                Config,
                "state width {} does not match head input {}",
                bad.len(),
                self.w1.input_dim()
            );
        }
        let k = states.len() as f64;
        let pre_act: Vec<Vec<f64>> = states.iter().map(|e| self.w1.forward(e)).collect();
        let mut pooled = vec![0.0; self.w1.output_dim()];
        for z in &pre_act {
            for (p, &v) in pooled.iter_mut().zip(z) {
                *p += gelu(v) / k;
            }
        }
        let pred = self.w2.forward(&pooled);
        Ok((
            pred,
            PostCache {
                states: states.to_vec(),
                pre_act,
                pooled,
            },
        ))
    }

    /// Parameter gradients and `∂L/∂e_j` for every state.
    pub fn backward(&self, cache: &PostCache, d_pred: &[f64]) -> (PostGrads, Vec<Vec<f64>>) {
        let mut w1 = self.w1.zeros_like();
        let mut w2 = self.w2.zeros_like();
        let d_pooled = self.w2.backward(&cache.pooled, d_pred, &mut w2);
        let k = cache.states.len() as f64;
        let d_states = cache
            .states
            .iter()
            .zip(&cache.pre_act)
            .map(|(e, z)| {
                let dz: Vec<f64> = d_pooled.iter().zip(z).map(|(g, &v)| g / k * gelu_grad(v)).collect();
                self.w1.backward(e, &dz, &mut w1)
            })
            .collect();
        (PostGrads { w1, w2 }, d_states)
    }

    /// `∂P_i/∂e_j` as a `hidden_dim` vector.
    pub fn input_gradient(&self, cache: &PostCache, i: usize, j: usize) -> Vec<f64> {
        let k = cache.states.len() as f64;
        let dz: Vec<f64> = self
            .w2
            .weight
            .row(i)
            .iter()
            .zip(&cache.pre_act[j])
            .map(|(w, &z)| w / k * gelu_grad(z))
            .collect();
        self.w1.weight.matvec_t(&dz)
    }

    /// `norms[j][i] = ‖∂P_i/∂e_j‖₂` for every state `j` and step `i`.
    pub fn input_gradient_norms(&self, cache: &PostCache) -> Vec<Vec<f64>> {
        (0..cache.states.len())
            .map(|j| {
                (0..self.pred_len())
                    .map(|i| l2_norm(&self.input_gradient(cache, i, j)))
                    .collect()
            })
            .collect()
    }
}

/// One row per step, for every sample of a batch.
pub type SampleRows = Vec<Vec<Vec<f64>>>;

/// Gradients of every trainable head tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub projection: ProjectionGrads,
    pub post: PostGrads,
}

/// Activations of a full-chain pass (projection, identity reservoir, post head).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainCache {
    pub projection: ProjectionCache,
    pub post: Vec<PostCache>,
}

/// Input projection plus post head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionHead {
    pub projection: InputProjection,
    pub post: PostHead,
    #[serde(skip)]
    post_cache: Option<PostCache>,
}

impl PredictionHead {
    pub fn new(config: &HeadConfig, in_width: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            projection: InputProjection::new(config, in_width, seed)?,
            post: PostHead::new(config, seed.wrapping_add(1))?,
            post_cache: None,
        })
    }

    /// Post-head pass over reservoir states; keeps the activations for
    /// [`Self::backward_post`].
    pub fn predict_post(&mut self, states: &[Vec<f64>]) -> Result<Vec<f64>> {
        let (pred, cache) = self.post.forward(states)?;
        self.post_cache = Some(cache);
        Ok(pred)
    }

    pub fn backward_post(&self, d_pred: &[f64]) -> Result<(PostGrads, Vec<Vec<f64>>)> {
        let Some(cache) = &self.post_cache else {
            bail!(State, "backward called before a forward pass");
        };
        if d_pred.len() != self.post.pred_len() {
            bail!(
                Argument,
                "loss gradient length {} vs pred_len {}",
                d_pred.len(),
                self.post.pred_len()
            );
        }
        Ok(self.post.backward(cache, d_pred))
    }

    pub fn post_cache(&self) -> Option<&PostCache> {
        self.post_cache.as_ref()
    }

    /// Full chain in train mode with the reservoir replaced by the identity:
    /// every projected token is a state.
    pub fn forward_chain(&self, batch: &[Vec<Vec<f64>>]) -> Result<(Vec<Vec<f64>>, ChainCache)> {
        let (tokens, projection) = self.projection.forward_train(batch)?;
        let mut preds = Vec::with_capacity(tokens.len());
        let mut post = Vec::with_capacity(tokens.len());
        for t in &tokens {
            let (p, c) = self.post.forward(t)?;
            preds.push(p);
            post.push(c);
        }
        Ok((preds, ChainCache { projection, post }))
    }

    /// Gradients of the full chain; returns `∂L/∂x` per sample and the
    /// state gradients `∂L/∂e` per sample.
    pub fn backward_chain(&self, cache: &ChainCache, d_preds: &[Vec<f64>]) -> (HeadGrads, SampleRows, SampleRows) {
        let mut post = PostGrads {
            w1: self.post.w1.zeros_like(),
            w2: self.post.w2.zeros_like(),
        };
        let mut d_states = Vec::with_capacity(d_preds.len());
        for (c, dp) in cache.post.iter().zip(d_preds) {
            let (g, ds) = self.post.backward(c, dp);
            add_linear(&mut post.w1, &g.w1);
            add_linear(&mut post.w2, &g.w2);
            d_states.push(ds);
        }
        let (projection, d_input) = self.projection.backward(&cache.projection, &d_states);
        (HeadGrads { projection, post }, d_input, d_states)
    }
}

pub fn add_linear(acc: &mut Linear, g: &Linear) {
    axpy(1.0, &g.weight.data, &mut acc.weight.data);
    axpy(1.0, &g.bias, &mut acc.bias);
}

/// Named views of the post-head tensors, in a fixed order.
pub fn post_params_mut(post: &mut PostHead) -> [(&'static str, &mut [f64]); 4] {
    [
        ("post.w1.weight", &mut post.w1.weight.data),
        ("post.w1.bias", &mut post.w1.bias),
        ("post.w2.weight", &mut post.w2.weight.data),
        ("post.w2.bias", &mut post.w2.bias),
    ]
}

pub fn post_grads(g: &PostGrads) -> [&[f64]; 4] {
    [&g.w1.weight.data, &g.w1.bias, &g.w2.weight.data, &g.w2.bias]
}

/// Relative error used by gradient checks: `|a − b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;
    use rand::Rng;

    fn small_config() -> HeadConfig {
        HeadConfig {
            kernel: 4,
            stride: 4,
            hidden_dim: 3,
            head_dim: 5,
            pred_len: 6,
            ..HeadConfig::default()
        }
    }

    #[test]
    fn zero_input_eval_gives_zero_tokens() {
        let cfg = HeadConfig::default();
        let mut proj = InputProjection::new(&cfg, 33, 1).unwrap();
        proj.conv.bias.iter_mut().for_each(|b| *b = 0.0);
        let out = proj.forward_eval(&vec![vec![0.0; 33]; 400]).unwrap();
        assert_eq!(out.len(), 13);
        assert!(out.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn width_mismatch_is_config_error() {
        let proj = InputProjection::new(&HeadConfig::default(), 33, 1).unwrap();
        assert!(matches!(
            proj.forward_eval(&vec![vec![0.0; 32]; 400]),
            Err(crate::Error::Config(_))
        ));
        let post = PostHead::new(&HeadConfig::default(), 1).unwrap();
        assert!(matches!(post.forward(&[vec![0.0; 3]]), Err(crate::Error::Config(_))));
    }

    #[test]
    fn train_mode_normalizes_channels() {
        let cfg = small_config();
        let mut proj = InputProjection::new(&cfg, 2, 3).unwrap();
        proj.bn.gamma = vec![1.0; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|_| {
                (0..16)
                    .map(|_| vec![rng.random::<f64>() * 300.0 + 2.0, rng.random::<f64>() * 100.0 - 7.0])
                    .collect()
            })
            .collect();
        let (_, cache) = proj.forward_train(&batch).unwrap();
        let rows: Vec<&[f64]> = cache.x_hat.iter().flatten().map(Vec::as_slice).collect();
        let (mean, var) = channel_stats(&rows, 3);
        for c in 0..3 {
            assert!(mean[c].abs() < 1e-9);
            assert!((var[c] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn eval_mode_is_per_sample() {
        let proj = InputProjection::new(&small_config(), 2, 3).unwrap();
        let a: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 1.0]).collect();
        let b: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0, -(i as f64)]).collect();
        let alone = proj.forward_eval(&a).unwrap();
        let _ = proj.forward_eval(&b).unwrap();
        assert_eq!(alone, proj.forward_eval(&a).unwrap());
    }

    #[test]
    fn zero_states_zero_prediction() {
        let post = PostHead::new(&HeadConfig::default(), 2).unwrap();
        let (p, _) = post.forward(&vec![vec![0.0; 64]; 50]).unwrap();
        assert_eq!(p.len(), 400);
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_case_two_by_two() {
        let post = PostHead {
            w1: Linear {
                weight: Matrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]),
                bias: vec![0.1, -0.2],
            },
            w2: Linear {
                weight: Matrix::from_rows(&[vec![0.3, -0.7]]),
                bias: vec![0.05],
            },
        };
        let e = [0.4, 0.2];
        let (p, _) = post.forward(&[e.to_vec()]).unwrap();
        let z0 = 0.4 - 0.2 + 0.1;
        let z1 = 0.5 * 0.4 + 2.0 * 0.2 - 0.2;
        let expected = 0.3 * gelu(z0) - 0.7 * gelu(z1) + 0.05;
        assert!((p[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let head = PredictionHead::new(&small_config(), 2, 0).unwrap();
        assert!(matches!(head.backward_post(&[0.0; 6]), Err(crate::Error::State(_))));
    }

    #[test]
    fn zero_loss_gradient_gives_zero_grads() {
        let mut head = PredictionHead::new(&small_config(), 2, 0).unwrap();
        head.predict_post(&[vec![0.3, -0.1, 0.2], vec![0.0, 1.0, 0.5]]).unwrap();
        let (g, ds) = head.backward_post(&[0.0; 6]).unwrap();
        assert!(post_grads(&g).iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(ds.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn l1_subgradient_at_zero() {
        let (loss, g) = l1_loss_grad(&[1.0, 2.0, 3.0], &[1.0, 1.0, 4.0]).unwrap();
        assert_eq!(loss, 2.0);
        assert_eq!(g, vec![0.0, 1.0, -1.0]);
    }

    #[test]
    fn input_gradient_matches_backward() {
        let post = PostHead::new(&small_config(), 5).unwrap();
        let states = vec![vec![0.3, -0.1, 0.2], vec![0.0, 1.0, 0.5]];
        let (_, cache) = post.forward(&states).unwrap();
        for i in 0..6 {
            let mut dp = vec![0.0; 6];
            dp[i] = 1.0;
            let (_, ds) = post.backward(&cache, &dp);
            for (j, row) in ds.iter().enumerate() {
                assert_eq!(row, &post.input_gradient(&cache, i, j));
            }
        }
    }

    #[test]
    fn saliency_differs_across_tokens() {
        let post = PostHead::new(&HeadConfig::default(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let states: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..64).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let (_, cache) = post.forward(&states).unwrap();
        let norms = post.input_gradient_norms(&cache);
        assert_ne!(norms[0][0], norms[1][0]);
    }
}
