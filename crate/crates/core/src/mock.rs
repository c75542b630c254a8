//! Deterministic in-process stand-in for the hidden-state service.
//!
//! Prompt tokens are embedded by hashing, then the prompt embeddings and the
//! client's input vectors drive a seeded echo-state recurrence
//! `s_t = tanh(W s_{t−1} + x_t + b)` with `ρ(W) = 0.9`. The entropy at each
//! position is a smooth function of `‖s_t‖` mapped into `[0, ln V]`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::reservoir::esn::rescale_spectral_radius;
use crate::service::{ReservoirOutput, ReservoirRequest, ReservoirService, ServerInfo, ServiceError, PROTOCOL_VERSION};
use crate::tensor::{axpy, l2_norm, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub model_id: String,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub seed: u64,
    pub spectral_radius: f64,
    pub input_gain: f64,
    pub embed_scale: f64,
    pub protocol_version: u32,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            model_id: "mock-esn".into(),
            hidden_dim: 64,
            vocab_size: 256,
            max_positions: 1024,
            seed: 0x5eed,
            spectral_radius: 0.9,
            input_gain: 1.0,
            embed_scale: 0.5,
            protocol_version: PROTOCOL_VERSION,
        }
    }
}

/// Splits text into mock tokens: `<|…|>` special tokens, runs of ASCII
/// letters, single digits, and single punctuation characters. Whitespace
/// separates tokens and is dropped.
pub fn tokenize(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if text[i..].starts_with("<|") {
            match text[i + 2..].find("|>") {
                Some(end) => {
                    let stop = i + 2 + end + 2;
                    out.push(&text[i..stop]);
                    i = stop;
                }
                None => {
                    out.push(&text[i..i + 1]);
                    i += 1;
                }
            }
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
                i += 1;
            }
            out.push(&text[start..i]);
        } else {
            // one character, which may be multi-byte
            let len = text[i..].chars().next().map_or(1, char::len_utf8);
            out.push(&text[i..i + len]);
            i += len;
        }
    }
    out
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct MockReservoir {
    config: MockConfig,
    w: Matrix,
    bias: Vec<f64>,
    entropy_gain: f64,
    entropy_center: f64,
}

impl MockReservoir {
    pub fn new(config: MockConfig) -> Result<Self, ServiceError> {
        if config.hidden_dim == 0 || config.vocab_size < 2 || config.max_positions == 0 {
            return Err(ServiceError::Argument(
                "mock needs hidden_dim >= 1, vocab_size >= 2, max_positions >= 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n = config.hidden_dim;
        let mut w = Matrix::uniform(n, n, 1.0, &mut rng);
        rescale_spectral_radius(&mut w, config.spectral_radius).map_err(|e| ServiceError::Argument(format!("{e}")))?;
        let bias = Matrix::uniform(n, 1, 0.1, &mut rng).data;
        let entropy_gain = 2.0 + 2.0 * rng.random::<f64>();
        let entropy_center = 0.3 + 0.4 * rng.random::<f64>();
        Ok(Self {
            config,
            w,
            bias,
            entropy_gain,
            entropy_center,
        })
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    /// Input-embedding row of one token.
    pub fn token_embedding(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(self.config.seed, token.as_bytes()));
        (0..self.config.hidden_dim)
            .map(|_| self.config.embed_scale * (2.0 * rng.random::<f64>() - 1.0))
            .collect()
    }

    fn entropy(&self, state: &[f64]) -> f64 {
        let rms = l2_norm(state) / libm::sqrt(state.len() as f64);
        let unit = 0.5 + 0.5 * libm::tanh(self.entropy_gain * (rms - self.entropy_center));
        libm::log(self.config.vocab_size as f64) * unit.clamp(0.0, 1.0)
    }
}

impl ReservoirService for MockReservoir {
    fn info(&self) -> Result<ServerInfo, ServiceError> {
        Ok(ServerInfo {
            model_id: self.config.model_id.clone(),
            hidden_dim: self.config.hidden_dim,
            vocab_size: self.config.vocab_size,
            max_positions: self.config.max_positions,
            protocol_version: self.config.protocol_version,
        })
    }

    fn run_reservoir(&self, request: &ReservoirRequest) -> Result<ReservoirOutput, ServiceError> {
        let d = self.config.hidden_dim;
        if request.return_last_k == 0 {
            return Err(ServiceError::Argument("return_last_k must be positive".into()));
        }
        for (i, v) in request.input_vectors.iter().enumerate() {
            if v.len() != d {
                return Err(ServiceError::Argument(format!(
                    "input vector {i} has length {}, hidden_dim is {d}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ServiceError::Argument(format!("input vector {i} is not finite")));
            }
        }
        let tokens = tokenize(&request.prompt_text);
        let positions = tokens.len() + request.input_vectors.len();
        if positions == 0 {
            return Err(ServiceError::Argument("request has no positions".into()));
        }
        if positions > self.config.max_positions {
            return Err(ServiceError::Capacity {
                positions,
                max_positions: self.config.max_positions,
            });
        }
        let keep = request.return_last_k.min(positions);
        let first_kept = positions - keep;
        let mut state = vec![0.0; d];
        let mut out = ReservoirOutput {
            states: Vec::with_capacity(keep),
            entropies: Vec::with_capacity(keep),
        };
        let drives = tokens.iter().map(|t| self.token_embedding(t)).chain(
            request
                .input_vectors
                .iter()
                .map(|v| v.iter().map(|x| self.config.input_gain * x).collect()),
        );
        for (pos, x) in drives.enumerate() {
            let mut pre = self.w.matvec(&state);
            axpy(1.0, &x, &mut pre);
            axpy(1.0, &self.bias, &mut pre);
            state = pre.into_iter().map(libm::tanh).collect();
            if pos >= first_kept {
                out.entropies.push(self.entropy(&state));
                out.states.push(state.clone());
            }
        }
        Ok(out)
    }

    fn embed_terms(&self, terms: &[String]) -> Result<Vec<Vec<f64>>, ServiceError> {
        if terms.is_empty() {
            return Err(ServiceError::Argument("no terms given".into()));
        }
        terms
            .iter()
            .map(|term| {
                let toks = tokenize(term);
                if toks.is_empty() {
                    return Err(ServiceError::Argument("empty term".into()));
                }
                let mut acc = vec![0.0; self.config.hidden_dim];
                for t in &toks {
                    axpy(1.0 / toks.len() as f64, &self.token_embedding(t), &mut acc);
                }
                Ok(acc)
            })
            .collect()
    }
}
