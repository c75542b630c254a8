//! Signal-digesting channels.
//!
//! The temporal channel windows the laser series into patches and encodes
//! them with a small frozen self-attention stack followed by a trainable
//! linear layer. The spatial channel embeds context terms ("pulse", "peak",
//! ...) through the reservoir service and lets every temporal token attend
//! over them. The two token streams are concatenated per position.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::nn::{gelu, layer_norm, sinusoidal_position, softmax, Linear};
use crate::tensor::{axpy, dot};

/// Context terms embedded by the spatial channel.
pub const DEFAULT_CONTEXT_TERMS: [&str; 6] = ["pulse", "picket", "ramp", "peak", "compression", "trailing"];

pub fn default_context_terms() -> Vec<String> {
    DEFAULT_CONTEXT_TERMS.iter().map(|s| String::from(*s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchConfig {
    /// Input window length `l`.
    pub window_len: usize,
    /// Forecast horizon `h`.
    pub horizon: usize,
    pub patch_size: usize,
    pub stride: usize,
    /// Temporal token width.
    pub d_tmp: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            window_len: 400,
            horizon: 400,
            patch_size: 32,
            stride: 32,
            d_tmp: 16,
        }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.stride == 0 || self.d_tmp == 0 {
            bail!(Config, "patch_size, stride and d_tmp must be positive");
        }
        if self.stride > self.patch_size {
            bail!(Config, "stride {} exceeds patch_size {}", self.stride, self.patch_size);
        }
        if self.window_len == 0 || self.horizon == 0 {
            bail!(Config, "window_len and horizon must be positive");
        }
        Ok(())
    }

    /// `⌈T / stride⌉`
    pub fn n_patches(&self, len: usize) -> usize {
        len.div_ceil(self.stride)
    }

    /// Left padding that makes the last patch end on the last sample.
    pub fn left_pad(&self, len: usize) -> usize {
        let n = self.n_patches(len);
        ((n - 1) * self.stride + self.patch_size).saturating_sub(len)
    }
}

/// Left-pads with the first sample and cuts `⌈T/stride⌉` patches.
pub fn window_patch(series: &[f64], cfg: &PatchConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let Some(&edge) = series.first() else {
        bail!(Argument, "cannot patch an empty series");
    };
    let pad = cfg.left_pad(series.len());
    let padded: Vec<f64> = core::iter::repeat_n(edge, pad).chain(series.iter().copied()).collect();
    Ok((0..cfg.n_patches(series.len()))
        .map(|i| padded[i * cfg.stride..i * cfg.stride + cfg.patch_size].to_vec())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalTokens {
    pub tokens: Vec<Vec<f64>>,
    /// Patch start in series coordinates; negative inside the left padding.
    pub positions: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialTokens {
    pub tokens: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedInput {
    pub tokens: Vec<Vec<f64>>,
}

impl AugmentedInput {
    pub fn width(&self) -> usize {
        self.tokens.first().map_or(0, Vec::len)
    }
}

/// Pre-norm single-head self-attention block with a GELU feed-forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderBlock {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

impl EncoderBlock {
    fn init(d: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            query: Linear::init(d, d, rng),
            key: Linear::init(d, d, rng),
            value: Linear::init(d, d, rng),
            out: Linear::init(d, d, rng),
            ff_in: Linear::init(d, 2 * d, rng),
            ff_out: Linear::init(2 * d, d, rng),
        }
    }

    fn forward(&self, x: &mut [Vec<f64>]) {
        let d = x[0].len();
        let h: Vec<Vec<f64>> = x.iter().map(|t| layer_norm(t)).collect();
        let q: Vec<Vec<f64>> = h.iter().map(|t| self.query.forward(t)).collect();
        let k: Vec<Vec<f64>> = h.iter().map(|t| self.key.forward(t)).collect();
        let v: Vec<Vec<f64>> = h.iter().map(|t| self.value.forward(t)).collect();
        let scale = 1.0 / libm::sqrt(d as f64);
        for (i, xi) in x.iter_mut().enumerate() {
            let logits: Vec<f64> = k.iter().map(|kj| scale * dot(&q[i], kj)).collect();
            let a = softmax(&logits);
            let mut ctx = vec![0.0; d];
            for (aj, vj) in a.iter().zip(&v) {
                axpy(*aj, vj, &mut ctx);
            }
            axpy(1.0, &self.out.forward(&ctx), xi);
        }
        for xi in x.iter_mut() {
            let hidden: Vec<f64> = self.ff_in.forward(&layer_norm(xi)).into_iter().map(gelu).collect();
            axpy(1.0, &self.ff_out.forward(&hidden), xi);
        }
    }
}

/// Frozen patch encoder with a trainable final linear layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalEncoder {
    pub embed: Linear,
    pub blocks: Vec<EncoderBlock>,
    pub last: Linear,
    pub positional: bool,
}

impl TemporalEncoder {
    pub fn new(patch_size: usize, d_tmp: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            embed: Linear::init(patch_size, d_tmp, &mut rng),
            blocks: (0..2).map(|_| EncoderBlock::init(d_tmp, &mut rng)).collect(),
            last: Linear::init(d_tmp, d_tmp, &mut rng),
            positional: true,
        }
    }

    pub fn d_tmp(&self) -> usize {
        self.last.output_dim()
    }

    pub fn encode(&self, patches: &[Vec<f64>], cfg: &PatchConfig) -> Result<TemporalTokens> {
        if patches.is_empty() {
            bail!(Argument, "no patches to encode");
        }
        if patches.iter().any(|p| p.len() != self.embed.input_dim()) {
            bail!(
                Config,
                "patch length does not match encoder input width {}",
                self.embed.input_dim()
            );
        }
        let d = self.embed.output_dim();
        let mut x: Vec<Vec<f64>> = patches
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut e = self.embed.forward(p);
                if self.positional {
                    axpy(1.0, &sinusoidal_position(i, d), &mut e);
                }
                e
            })
            .collect();
        for block in &self.blocks {
            block.forward(&mut x);
        }
        let pad = cfg.left_pad(cfg.window_len) as i64;
        Ok(TemporalTokens {
            tokens: x.iter().map(|t| self.last.forward(t)).collect(),
            positions: (0..patches.len()).map(|i| (i * cfg.stride) as i64 - pad).collect(),
        })
    }
}

/// Activations kept by [`SpatialEncoder::forward`] for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCache {
    pub queries: Vec<Vec<f64>>,
    pub terms: Vec<Vec<f64>>,
    pub keys: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    /// `attention[i][j]`: weight of term `j` for temporal token `i`.
    pub attention: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrads {
    pub key: Linear,
    pub value: Linear,
    pub queries: Vec<Vec<f64>>,
}

/// Cross-attention from temporal tokens (queries) to projected context-term
/// embeddings (keys and values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialEncoder {
    pub key: Linear,
    pub value: Linear,
}

impl SpatialEncoder {
    pub fn new(term_dim: usize, d_tmp: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            key: Linear::init(term_dim, d_tmp, &mut rng),
            value: Linear::init(term_dim, d_tmp, &mut rng),
        }
    }

    pub fn forward(
        &self,
        temporal: &TemporalTokens,
        term_vectors: &[Vec<f64>],
    ) -> Result<(SpatialTokens, SpatialCache)> {
        if term_vectors.is_empty() {
            bail!(Argument, "spatial encoding needs at least one context term");
        }
        if term_vectors.iter().any(|t| t.len() != self.key.input_dim()) {
            bail!(
                Config,
                "context term width does not match projection input {}",
                self.key.input_dim()
            );
        }
        let d = self.key.output_dim();
        if temporal.tokens.iter().any(|q| q.len() != d) {
            bail!(Config, "temporal token width does not match d_tmp {d}");
        }
        let keys: Vec<Vec<f64>> = term_vectors.iter().map(|t| self.key.forward(t)).collect();
        let values: Vec<Vec<f64>> = term_vectors.iter().map(|t| self.value.forward(t)).collect();
        let scale = 1.0 / libm::sqrt(d as f64);
        let mut attention = Vec::with_capacity(temporal.tokens.len());
        let mut tokens = Vec::with_capacity(temporal.tokens.len());
        for q in &temporal.tokens {
            let logits: Vec<f64> = keys.iter().map(|k| scale * dot(q, k)).collect();
            let a = softmax(&logits);
            let mut out = vec![0.0; d];
            for (aj, vj) in a.iter().zip(&values) {
                axpy(*aj, vj, &mut out);
            }
            tokens.push(out);
            attention.push(a);
        }
        Ok((
            SpatialTokens { tokens },
            SpatialCache {
                queries: temporal.tokens.clone(),
                terms: term_vectors.to_vec(),
                keys,
                values,
                attention,
            },
        ))
    }

    /// Gradients of a scalar loss given `∂L/∂out` for every output token.
    pub fn backward(&self, cache: &SpatialCache, d_out: &[Vec<f64>]) -> SpatialGrads {
        let d = self.key.output_dim();
        let scale = 1.0 / libm::sqrt(d as f64);
        let m = cache.keys.len();
        let mut d_keys = vec![vec![0.0; d]; m];
        let mut d_values = vec![vec![0.0; d]; m];
        let mut d_queries = Vec::with_capacity(d_out.len());
        for (i, g) in d_out.iter().enumerate() {
            let a = &cache.attention[i];
            let da: Vec<f64> = cache.values.iter().map(|v| dot(g, v)).collect();
            let mean: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
            let mut dq = vec![0.0; d];
            for j in 0..m {
                axpy(a[j], g, &mut d_values[j]);
                let dlogit = a[j] * (da[j] - mean) * scale;
                axpy(dlogit, &cache.keys[j], &mut dq);
                axpy(dlogit, &cache.queries[i], &mut d_keys[j]);
            }
            d_queries.push(dq);
        }
        let mut key = self.key.zeros_like();
        let mut value = self.value.zeros_like();
        for j in 0..m {
            self.key.backward(&cache.terms[j], &d_keys[j], &mut key);
            self.value.backward(&cache.terms[j], &d_values[j], &mut value);
        }
        SpatialGrads {
            key,
            value,
            queries: d_queries,
        }
    }
}

/// Per-token concatenation `[temporal; spatial]`.
pub fn fuse_channels(temporal: &TemporalTokens, spatial: &SpatialTokens) -> Result<AugmentedInput> {
    if temporal.tokens.len() != spatial.tokens.len() {
        bail!(
            Argument,
            "token count mismatch: {} temporal vs {} spatial",
            temporal.tokens.len(),
            spatial.tokens.len()
        );
    }
    Ok(AugmentedInput {
        tokens: temporal
            .tokens
            .iter()
            .zip(&spatial.tokens)
            .map(|(t, s)| t.iter().chain(s).copied().collect())
            .collect(),
    })
}

/// Both channels together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalChannels {
    pub patch: PatchConfig,
    pub temporal: TemporalEncoder,
    pub spatial: SpatialEncoder,
}

impl SignalChannels {
    pub fn new(patch: PatchConfig, term_dim: usize, seed: u64) -> Result<Self> {
        patch.validate()?;
        Ok(Self {
            temporal: TemporalEncoder::new(patch.patch_size, patch.d_tmp, seed),
            spatial: SpatialEncoder::new(term_dim, patch.d_tmp, seed.wrapping_add(1)),
            patch,
        })
    }

    pub fn encode(&self, series: &[f64], term_vectors: &[Vec<f64>]) -> Result<AugmentedInput> {
        let patches = window_patch(series, &self.patch)?;
        let temporal = self.temporal.encode(&patches, &self.patch)?;
        let (spatial, _) = self.spatial.forward(&temporal, term_vectors)?;
        fuse_channels(&temporal, &spatial)
    }
}
