//! Reservoirs: a state map `s[t+1] = f(s[..t], input, prompt)` realized by
//! a local echo-state network, a polynomial delay-tap map, or a remote
//! frozen language model.
//!
//! The classical backends are Markovian in their own state and read out
//! with closed-form ridge regression. The language-model backend keeps its
//! history implicitly in the attention context and is read out by the
//! gradient-trained head in [`crate::head`].

pub mod esn;
pub mod ngrc;
pub mod ridge;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use esn::{esn_step, Esn, EsnConfig};
pub use ngrc::{ngrc_features, NgrcConfig};
pub use ridge::{ridge_fit, ridge_fit_with_bias, ReadoutWeights};

use crate::error::{bail, Error, Result};
use crate::prompt::FusionPrompt;
use crate::service::{ReservoirOutput, ReservoirRequest, ReservoirService};
use crate::tensor::Matrix;

/// Reservoir state vector and the number of inputs it has absorbed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirState {
    pub s: Vec<f64>,
    pub history: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReservoirKind {
    Esn,
    Ngrc,
    Llm,
}

impl core::str::FromStr for ReservoirKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "esn" => Ok(Self::Esn),
            "ngrc" => Ok(Self::Ngrc),
            "llm" => Ok(Self::Llm),
            other => Err(Error::Config(format!(
                "unknown reservoir `{other}` (expected esn, ngrc or llm)"
            ))),
        }
    }
}

impl core::fmt::Display for ReservoirKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Self::Esn => "esn",
            Self::Ngrc => "ngrc",
            Self::Llm => "llm",
        })
    }
}

/// Sends the prompt and projected input tokens to the service and returns
/// the trailing `k` states and entropies.
pub fn llm_reservoir_run<S: ReservoirService + ?Sized>(
    service: &S,
    prompt: &FusionPrompt,
    projected: &[Vec<f64>],
    k: usize,
    context: &str,
) -> Result<ReservoirOutput> {
    let request = ReservoirRequest {
        prompt_text: prompt.text.clone(),
        input_vectors: projected.to_vec(),
        return_last_k: k,
    };
    service.run_reservoir(&request).map_err(|source| Error::ServiceContext {
        context: String::from(context),
        source,
    })
}

fn stack(rows: &[&[f64]]) -> Matrix {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        data.extend_from_slice(r);
    }
    Matrix::from_vec(rows.len(), cols, data)
}

/// Normalized laser/HXR pair used by the classical fits.
pub type SeriesPair<'a> = (&'a [f64], &'a [f64]);

/// Echo-state network with a ridge readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsnForecaster {
    pub esn: Esn,
    pub readout: Option<ReadoutWeights>,
}

impl EsnForecaster {
    pub fn new(config: EsnConfig) -> Result<Self> {
        Ok(Self {
            esn: Esn::new(config, 1)?,
            readout: None,
        })
    }

    /// Teacher-forced rollouts from the zero state; steps before `warmup`
    /// are excluded from the fit. With output feedback the true previous
    /// target drives the state.
    pub fn fit(&mut self, pairs: &[SeriesPair<'_>]) -> Result<()> {
        let warmup = self.esn.config.warmup;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut targets: Vec<f64> = Vec::new();
        for (laser, hxr) in pairs {
            if laser.len() != hxr.len() {
                bail!(Argument, "laser/hxr length mismatch");
            }
            let states = if self.esn.has_feedback() {
                self.esn.run_teacher(laser, hxr, self.esn.zero_state())?
            } else {
                self.esn.run(laser, self.esn.zero_state())?
            };
            for (t, s) in states.into_iter().enumerate().skip(warmup) {
                rows.push(s);
                targets.push(hxr[t]);
            }
        }
        if rows.is_empty() {
            bail!(Argument, "no training rows left after warm-up");
        }
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let s = stack(&refs);
        let y = Matrix::from_vec(targets.len(), 1, targets);
        self.readout = Some(ridge_fit_with_bias(&s, &y, self.esn.config.ridge)?);
        Ok(())
    }

    /// Readout over the teacher-forced rollout: with output feedback the true
    /// previous target drives the state, so this is the in-sample fit.
    pub fn reproduce(&self, laser: &[f64], hxr: &[f64]) -> Result<Vec<f64>> {
        let Some(readout) = &self.readout else {
            bail!(State, "esn readout has not been trained");
        };
        if laser.len() != hxr.len() {
            bail!(Argument, "laser/hxr length mismatch");
        }
        let states = if self.esn.has_feedback() {
            self.esn.run_teacher(laser, hxr, self.esn.zero_state())?
        } else {
            self.esn.run(laser, self.esn.zero_state())?
        };
        Ok(states.iter().map(|s| readout.apply(s)[0]).collect())
    }

    /// With output feedback, each prediction is fed back as the next
    /// step's previous output.
    pub fn forecast(&self, laser: &[f64]) -> Result<Vec<f64>> {
        let Some(readout) = &self.readout else {
            bail!(State, "esn readout has not been trained");
        };
        if !self.esn.has_feedback() {
            let states = self.esn.run(laser, self.esn.zero_state())?;
            return Ok(states.iter().map(|s| readout.apply(s)[0]).collect());
        }
        let mut state = self.esn.zero_state();
        let mut prev = 0.0;
        let mut out = Vec::with_capacity(laser.len());
        for &u in laser {
            state = self.esn.step(&state, &[u, prev])?;
            prev = readout.apply(&state.s)[0];
            out.push(prev);
        }
        Ok(out)
    }
}

/// Polynomial delay-tap features with a ridge readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgrcForecaster {
    pub config: NgrcConfig,
    pub readout: Option<ReadoutWeights>,
}

impl NgrcForecaster {
    pub fn new(config: NgrcConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, readout: None })
    }

    pub fn fit(&mut self, pairs: &[SeriesPair<'_>]) -> Result<()> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut targets: Vec<f64> = Vec::new();
        for (laser, hxr) in pairs {
            if laser.len() != hxr.len() {
                bail!(Argument, "laser/hxr length mismatch");
            }
            rows.extend(ngrc::series_features(laser, &self.config)?);
            targets.extend_from_slice(hxr);
        }
        if rows.is_empty() {
            bail!(Argument, "no training rows");
        }
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let s = stack(&refs);
        let y = Matrix::from_vec(targets.len(), 1, targets);
        self.readout = Some(ridge_fit(&s, &y, self.config.ridge)?);
        Ok(())
    }

    pub fn forecast(&self, laser: &[f64]) -> Result<Vec<f64>> {
        let Some(readout) = &self.readout else {
            bail!(State, "ngrc readout has not been trained");
        };
        Ok(ngrc::series_features(laser, &self.config)?
            .iter()
            .map(|f| readout.apply(f)[0])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn untrained_forecasters_report_state_error() {
        let esn = EsnForecaster::new(EsnConfig::default()).unwrap();
        assert!(matches!(esn.forecast(&[0.0; 4]), Err(Error::State(_))));
        let ngrc = NgrcForecaster::new(NgrcConfig::default()).unwrap();
        assert!(matches!(ngrc.forecast(&[0.0; 4]), Err(Error::State(_))));
    }

    #[test]
    fn zero_readout_gives_zero_forecast() {
        let mut esn = EsnForecaster::new(EsnConfig::default()).unwrap();
        esn.readout = Some(ReadoutWeights {
            w_out: Matrix::zeros(esn.esn.config.n_units, 1),
            bias: vec![0.0],
        });
        let out = esn.forecast(&[0.0; 400]).unwrap();
        assert_eq!(out.len(), 400);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ngrc_recovers_quadratic_map() {
        let laser: Vec<f64> = (0..200).map(|t| libm::sin(t as f64 * 0.1)).collect();
        let hxr: Vec<f64> = laser.iter().map(|&x| 0.5 * x * x - 0.1 * x + 0.2).collect();
        let mut f = NgrcForecaster::new(NgrcConfig {
            taps: 1,
            degree: 2,
            ridge: 0.0,
        })
        .unwrap();
        f.fit(&[(&laser, &hxr)]).unwrap();
        let pred = f.forecast(&laser).unwrap();
        let err: f64 = pred.iter().zip(&hxr).map(|(a, b)| (a - b).abs()).sum();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn kind_parses() {
        assert_eq!("llm".parse::<ReservoirKind>().unwrap(), ReservoirKind::Llm);
        assert!("lstm".parse::<ReservoirKind>().is_err());
    }
}
