//! Shot files: one JSON object per line with the fields `shot_id`,
//! `dt_ns`, `target_size_um`, `phase_plate`, `laser` and `hxr`. Blank lines
//! are skipped.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use hxr_core::data::{Shot, ShotSet, SplitTag};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    shot_id: String,
    dt_ns: f64,
    target_size_um: f64,
    phase_plate: String,
    laser: Vec<f64>,
    hxr: Vec<f64>,
}

pub fn encode_shot(shot: &Shot) -> String {
    let rec = Record {
        shot_id: shot.shot_id.clone(),
        dt_ns: shot.dt_ns,
        target_size_um: shot.target_size_um,
        phase_plate: shot.phase_plate.clone(),
        laser: shot.laser.clone(),
        hxr: shot.hxr.clone(),
    };
    json::to_string(&rec).expect("shot records serialize")
}

/// Parses one record; `line` is 1-based and only used in messages.
pub fn decode_shot(text: &str, path: &Path, line: usize) -> Result<Shot> {
    let rec: Record = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    })?;
    let shot = Shot {
        shot_id: rec.shot_id,
        dt_ns: rec.dt_ns,
        target_size_um: rec.target_size_um,
        phase_plate: rec.phase_plate,
        laser: rec.laser,
        hxr: rec.hxr,
    };
    shot.validate()
        .map_err(|e| Error::Schema(format!("{}:{line}: {}", path.display(), core_message(e))))?;
    Ok(shot)
}

fn core_message(e: hxr_core::Error) -> String {
    match e {
        hxr_core::Error::Argument(m) => m,
        other => other.to_string(),
    }
}

pub fn save_shots(set: &ShotSet, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(file);
    for shot in set.iter() {
        writeln!(w, "{}", encode_shot(shot)).map_err(|e| Error::file(path, e))?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}

pub fn load_shots(path: &Path) -> Result<ShotSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let mut shots = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        shots.push(decode_shot(line, path, i + 1)?);
    }
    ShotSet::new(shots, SplitTag::Unsplit)
        .map_err(|e| Error::Schema(format!("{}: {}", path.display(), core_message(e))))
}
