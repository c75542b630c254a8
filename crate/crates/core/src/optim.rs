//! Adam with bias correction.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.0004,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates of one tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One Adam update of `param` at step `t ≥ 1`.
pub fn adam_update(
    name: &str,
    param: &mut [f64],
    grad: &[f64],
    moments: &mut Moments,
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        bail!(Argument, "adam step counter starts at 1");
    }
    if param.len() != grad.len() || moments.m.len() != grad.len() || moments.v.len() != grad.len() {
        bail!(Argument, "adam shape mismatch for `{name}`");
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        bail!(Numeric, "non-finite gradient in `{name}` at index {i}");
    }
    let c1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let c2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for (((p, &g), m), v) in param
        .iter_mut()
        .zip(grad)
        .zip(moments.m.iter_mut())
        .zip(moments.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
    Ok(())
}

/// Adam state for a set of named tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    pub moments: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Updates every `(name, param)` with the matching gradient. All
    /// gradients are checked before any parameter moves.
    pub fn step(&mut self, params: &mut [(&str, &mut [f64])], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            bail!(
                Argument,
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            );
        }
        for ((name, _), g) in params.iter().zip(grads) {
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                bail!(Numeric, "non-finite gradient in `{name}` at index {i}");
            }
        }
        self.t += 1;
        for ((name, p), g) in params.iter_mut().zip(grads) {
            let moments = self.moments.entry(String::from(*name)).or_insert_with(|| Moments {
                m: vec![0.0; g.len()],
                v: vec![0.0; g.len()],
            });
            adam_update(name, p, g, moments, self.t, &self.config)?;
        }
        Ok(())
    }
}
