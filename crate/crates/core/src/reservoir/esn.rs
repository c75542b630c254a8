//! Leaky echo-state network.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ReservoirState;
use crate::error::{bail, Result};
use crate::tensor::{axpy, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsnConfig {
    pub n_units: usize,
    pub spectral_radius: f64,
    pub input_scale: f64,
    pub bias_scale: f64,
    pub leak: f64,
    pub density: f64,
    pub seed: u64,
    pub ridge: f64,
    /// Leading steps of every shot left out of the readout fit.
    pub warmup: usize,
    /// Scale of the output-feedback input weights; 0 disables feedback.
    pub feedback_scale: f64,
}

impl Default for EsnConfig {
    fn default() -> Self {
        Self {
            n_units: 200,
            spectral_radius: 0.9,
            input_scale: 1.0,
            bias_scale: 0.2,
            leak: 1.0,
            density: 0.1,
            seed: 1,
            ridge: 1e-2,
            warmup: 20,
            feedback_scale: 0.0,
        }
    }
}

impl EsnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 {
            bail!(Config, "esn.n_units must be positive");
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius < 1.0) {
            bail!(Config, "esn.spectral_radius must lie in (0, 1)");
        }
        if !(self.leak > 0.0 && self.leak <= 1.0) {
            bail!(Config, "esn.leak must lie in (0, 1]");
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            bail!(Config, "esn.density must lie in (0, 1]");
        }
        if !(self.ridge >= 0.0)
            || !self.input_scale.is_finite()
            || !self.bias_scale.is_finite()
            || !self.feedback_scale.is_finite()
        {
            bail!(Config, "esn.ridge must be non-negative and scales finite");
        }
        Ok(())
    }
}

/// Largest eigenvalue modulus, from the real Schur form.
pub fn spectral_radius(m: &Matrix) -> f64 {
    assert_eq!(m.rows, m.cols, "spectral radius of a non-square matrix");
    if m.rows == 0 {
        return 0.0;
    }
    let dm = DMatrix::from_row_slice(m.rows, m.cols, &m.data);
    dm.complex_eigenvalues()
        .iter()
        .map(|z| libm::hypot(z.re, z.im))
        .fold(0.0, f64::max)
}

/// Rescales `m` in place so its spectral radius equals `target`.
pub fn rescale_spectral_radius(m: &mut Matrix, target: f64) -> Result<()> {
    let rho = spectral_radius(m);
    if !(rho > 0.0 && rho.is_finite()) {
        bail!(Numeric, "cannot rescale a matrix with spectral radius {rho}");
    }
    m.scale(target / rho);
    Ok(())
}

/// Sparse square matrix with `±1` uniform entries at the given density,
/// rescaled to spectral radius `rho`.
pub fn random_recurrent<R: Rng + ?Sized>(n: usize, density: f64, rho: f64, rng: &mut R) -> Result<Matrix> {
    let mut w = Matrix::zeros(n, n);
    for x in w.data.iter_mut() {
        if rng.random::<f64>() < density {
            *x = 2.0 * rng.random::<f64>() - 1.0;
        }
    }
    rescale_spectral_radius(&mut w, rho)?;
    Ok(w)
}

/// One leaky update `s' = (1−α)s + α·tanh(W s + W_in u + b)`.
pub fn esn_step(state: &[f64], input: &[f64], w: &Matrix, w_in: &Matrix, bias: &[f64], leak: f64) -> Result<Vec<f64>> {
    if input.iter().any(|v| !v.is_finite()) {
        bail!(Numeric, "non-finite reservoir input");
    }
    if state.len() != w.cols || input.len() != w_in.cols || bias.len() != w.rows {
        bail!(Argument, "esn_step dimension mismatch");
    }
    let mut pre = w.matvec(state);
    axpy(1.0, &w_in.matvec(input), &mut pre);
    axpy(1.0, bias, &mut pre);
    Ok(state
        .iter()
        .zip(pre)
        .map(|(&s, z)| (1.0 - leak) * s + leak * libm::tanh(z))
        .collect())
}

/// A seeded echo-state reservoir. With output feedback enabled, the last
/// column of `w_in` carries the previous output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Esn {
    pub config: EsnConfig,
    pub w: Matrix,
    pub w_in: Matrix,
    pub bias: Vec<f64>,
}

impl Esn {
    pub fn new(config: EsnConfig, n_inputs: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w = random_recurrent(config.n_units, config.density, config.spectral_radius, &mut rng)?;
        let w_in = Matrix::uniform(config.n_units, n_inputs, config.input_scale, &mut rng);
        let bias = Matrix::uniform(config.n_units, 1, config.bias_scale, &mut rng).data;
        let w_in = if config.feedback_scale > 0.0 {
            let w_fb = Matrix::uniform(config.n_units, 1, config.feedback_scale, &mut rng);
            let mut joined = Matrix::zeros(config.n_units, n_inputs + 1);
            for r in 0..config.n_units {
                let row = joined.row_mut(r);
                row[..n_inputs].copy_from_slice(w_in.row(r));
                row[n_inputs] = w_fb.get(r, 0);
            }
            joined
        } else {
            w_in
        };
        Ok(Self { config, w, w_in, bias })
    }

    pub fn has_feedback(&self) -> bool {
        self.config.feedback_scale > 0.0
    }

    pub fn zero_state(&self) -> ReservoirState {
        ReservoirState {
            s: vec![0.0; self.config.n_units],
            history: 0,
        }
    }

    pub fn step(&self, state: &ReservoirState, input: &[f64]) -> Result<ReservoirState> {
        Ok(ReservoirState {
            s: esn_step(&state.s, input, &self.w, &self.w_in, &self.bias, self.config.leak)?,
            history: state.history + 1,
        })
    }

    /// Rollout driven by `series` with the true previous output `targets[t−1]`
    /// fed back (0 before the first step).
    pub fn run_teacher(&self, series: &[f64], targets: &[f64], initial: ReservoirState) -> Result<Vec<Vec<f64>>> {
        let mut state = initial;
        let mut out = Vec::with_capacity(series.len());
        let mut prev = 0.0;
        for (&u, &y) in series.iter().zip(targets) {
            state = self.step(&state, &[u, prev])?;
            out.push(state.s.clone());
            prev = y;
        }
        Ok(out)
    }

    /// Rollout of a scalar series without feedback; one state per step.
    pub fn run(&self, series: &[f64], initial: ReservoirState) -> Result<Vec<Vec<f64>>> {
        let mut state = initial;
        let mut out = Vec::with_capacity(series.len());
        for &u in series {
            state = self.step(&state, &[u])?;
            out.push(state.s.clone());
        }
        Ok(out)
    }
}
