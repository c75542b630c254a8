//! Trained-model container: a versioned JSON document holding the run
//! configuration, the normalization parameters and every weight.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use hxr_core::pipeline::{Model, TrainTrace};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::json;

pub const FORMAT: &str = "hxr-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub model: Model,
    pub trace: Option<TrainTrace>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

impl Checkpoint {
    pub fn new(config: RunConfig, model: Model, trace: Option<TrainTrace>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config,
            model,
            trace,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        }
        let file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = BufWriter::new(file);
        json::to_writer(&mut w, self).map_err(|e| Error::file(path, e))?;
        w.flush().map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        let header: Header =
            json::from_slice(&bytes).map_err(|e| Error::file(path, format!("not a checkpoint: {e}")))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(Error::Schema(format!(
                "{}: checkpoint format {} v{}, expected {FORMAT} v{VERSION}",
                path.display(),
                header.format,
                header.version
            )));
        }
        json::from_slice(&bytes).map_err(|e| Error::file(path, format!("corrupt checkpoint: {e}")))
    }
}
