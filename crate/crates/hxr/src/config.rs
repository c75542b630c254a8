//! Run configuration, read from TOML. Every field has a default, so an
//! empty file reproduces the reference training setup: 80/10/10 split,
//! 100 epochs, batch 5, learning rate 0.0004, k = 50, head width 128 and a
//! CAE floor of 0.03.
//!
//! The top-level `seed` drives model initialization and the epoch shuffle;
//! it overwrites `train.seed` and `reservoir.esn.seed`. The data split has
//! its own `data.split_seed`.

use std::fs;
use std::path::{Path, PathBuf};

use hxr_core::data::GeneratorConfig;
use hxr_core::head::HeadConfig;
use hxr_core::metrics::DEFAULT_FLOOR;
use hxr_core::mock::MockConfig;
use hxr_core::pipeline::{PipelineConfig, TrainConfig};
use hxr_core::prompt::{PromptBuilder, PromptDescriptors};
use hxr_core::reservoir::{EsnConfig, NgrcConfig, ReservoirKind};
use hxr_core::sdc::{default_context_terms, PatchConfig};
use hxr_core::service::DEFAULT_LAST_K;
use serde::{Deserialize, Serialize};

use crate::client::{ClientConfig, INPROC};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub shots: PathBuf,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub split_seed: u64,
    /// Keep only the first `n` shots of the training split.
    pub train_samples: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            shots: PathBuf::from("data/shots.jsonl"),
            split: [0.8, 0.1, 0.1],
            split_seed: 7,
            train_samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirConfig {
    pub kind: ReservoirKind,
    /// `inproc` or an HTTP base URL; unset falls back to the environment.
    pub endpoint: Option<String>,
    pub client: ClientConfig,
    pub esn: EsnConfig,
    pub ngrc: NgrcConfig,
    /// Used by the `inproc` endpoint and by `serve-mock`.
    pub mock: MockConfig,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            kind: ReservoirKind::Llm,
            endpoint: None,
            client: ClientConfig::default(),
            esn: EsnConfig::default(),
            ngrc: NgrcConfig::default(),
            mock: MockConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Directory holding `context.txt`, `task.txt` and `input.txt`; the
    /// bundled templates are used when unset.
    pub template_dir: Option<PathBuf>,
    pub context_terms: Vec<String>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            template_dir: None,
            context_terms: default_context_terms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub floor: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { floor: DEFAULT_FLOOR }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Trailing reservoir positions read by the head and the scanner.
    pub k: usize,
    pub data: DataConfig,
    pub generator: GeneratorConfig,
    pub reservoir: ReservoirConfig,
    pub patch: PatchConfig,
    pub head: HeadConfig,
    pub train: TrainConfig,
    pub prompt: PromptConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            k: DEFAULT_LAST_K,
            data: DataConfig::default(),
            generator: GeneratorConfig::default(),
            reservoir: ReservoirConfig::default(),
            patch: PatchConfig::default(),
            head: HeadConfig::default(),
            train: TrainConfig::default(),
            prompt: PromptConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.split.iter().any(|r| !(*r >= 0.0)) || (d.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "data.split {:?} must be non-negative and sum to 1",
                d.split
            )));
        }
        if d.train_samples == Some(0) {
            return Err(Error::Config("data.train_samples must be positive".into()));
        }
        if !(self.metrics.floor >= 0.0 && self.metrics.floor.is_finite()) {
            return Err(Error::Config("metrics.floor must be finite and non-negative".into()));
        }
        self.generator.validate()?;
        self.reservoir.esn.validate()?;
        self.reservoir.ngrc.validate()?;
        self.pipeline().validate()?;
        Ok(())
    }

    /// Endpoint precedence: explicit override, `reservoir.endpoint`, then
    /// the in-process mock.
    pub fn endpoint(&self, overridden: Option<&str>) -> String {
        overridden
            .or(self.reservoir.endpoint.as_deref())
            .unwrap_or(INPROC)
            .to_owned()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            patch: self.patch.clone(),
            head: self.head.clone(),
            train: TrainConfig {
                seed: self.seed,
                ..self.train.clone()
            },
            k: self.k,
            context_terms: self.prompt.context_terms.clone(),
            seed: self.seed,
        }
    }

    pub fn esn(&self) -> EsnConfig {
        EsnConfig {
            seed: self.seed,
            ..self.reservoir.esn.clone()
        }
    }

    pub fn prompt_builder(&self) -> Result<PromptBuilder> {
        let Some(dir) = &self.prompt.template_dir else {
            return Ok(PromptBuilder::default());
        };
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::file(path, e))
        };
        let descriptors = PromptDescriptors::new(&read("context.txt")?, &read("task.txt")?, &read("input.txt")?)?;
        Ok(PromptBuilder::new(descriptors))
    }
}
