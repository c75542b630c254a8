//! Confidence scanner: token entropies reweighted by head saliency,
//! `C = −H × S`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::head::PostHead;
use crate::nn::softmax;
use crate::service::{ReservoirOutput, DEFAULT_LAST_K};

/// Entropy in nats of a probability row, with `0 · ln 0 = 0`.
pub fn token_entropy(probs: &[f64]) -> Result<f64> {
    if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        bail!(Argument, "invalid probability {p}");
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        bail!(Argument, "probabilities sum to {total}, not 1");
    }
    Ok(-probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * libm::log(p))
        .sum::<f64>())
}

/// `k × L` column-stochastic matrix; `s[j][i]` weighs token `j` for step `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMatrix {
    pub s: Vec<Vec<f64>>,
}

impl SaliencyMatrix {
    pub fn k(&self) -> usize {
        self.s.len()
    }

    pub fn steps(&self) -> usize {
        self.s.first().map_or(0, Vec::len)
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.s.iter().map(|row| row[i]).collect()
    }
}

/// Softmax over tokens of the per-token gradient norms, one column per
/// prediction step. `norms[j][i] = ‖∂P_i/∂e_j‖`. A column whose gradients
/// are all zero is uniform.
pub fn saliency(norms: &[Vec<f64>]) -> Result<SaliencyMatrix> {
    let Some(first) = norms.first() else {
        bail!(Argument, "saliency needs at least one token");
    };
    let steps = first.len();
    if norms.iter().any(|r| r.len() != steps) {
        bail!(Argument, "ragged gradient-norm rows");
    }
    if let Some(x) = norms.iter().flatten().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        bail!(Numeric, "invalid gradient norm {x}");
    }
    let k = norms.len();
    let mut s = vec![vec![0.0; steps]; k];
    for i in 0..steps {
        let column: Vec<f64> = norms.iter().map(|r| r[i]).collect();
        let weights = if column.iter().all(|&x| x == 0.0) {
            vec![1.0 / k as f64; k]
        } else {
            softmax(&column)
        };
        for (row, w) in s.iter_mut().zip(weights) {
            row[i] = w;
        }
    }
    Ok(SaliencyMatrix { s })
}

/// `C_i = −Σ_j H_j · S_{j,i}`.
pub fn confidence(entropies: &[f64], s: &SaliencyMatrix) -> Result<Vec<f64>> {
    if entropies.len() != s.k() {
        bail!(Argument, "{} entropies for {} saliency rows", entropies.len(), s.k());
    }
    Ok((0..s.steps())
        .map(|i| -entropies.iter().zip(&s.s).map(|(h, row)| h * row[i]).sum::<f64>())
        .collect())
}

/// Prediction plus one confidence score per step, from the last
/// `min(k, available)` reservoir states.
pub fn scan(output: &ReservoirOutput, head: &PostHead, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if output.is_empty() {
        bail!(Argument, "reservoir output has no states");
    }
    if k == 0 {
        bail!(Argument, "k must be positive");
    }
    let tail = output.last_k(k);
    let (pred, cache) = head.forward(&tail.states)?;
    let s = saliency(&head.input_gradient_norms(&cache))?;
    Ok((pred, confidence(&tail.entropies, &s)?))
}

pub fn scan_default(output: &ReservoirOutput, head: &PostHead) -> Result<(Vec<f64>, Vec<f64>)> {
    scan(output, head, DEFAULT_LAST_K)
}
