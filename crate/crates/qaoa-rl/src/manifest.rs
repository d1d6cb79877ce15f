//! Append-only run manifests: one JSON line per command invocation, enough to
//! re-run it without shell history.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every resolved flag; valid input for `--config`.
    pub config: serde_json::Value,
    pub argv: Vec<String>,
    pub master_seed: Option<u64>,
    pub instances: Vec<String>,
    pub outputs: Vec<String>,
    pub code_version: String,
    pub threads: usize,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Default manifest location: beside the first output.
pub fn default_path(first_output: &Path) -> PathBuf {
    match first_output.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join(MANIFEST_FILE),
        _ => PathBuf::from(MANIFEST_FILE),
    }
}

pub fn append(path: &Path, entry: &RunManifest) -> CliResult<()> {
    crate::formats::ensure_parent(path)?;
    let line = serde_json::to_string(entry).map_err(|e| CliError::format(path, e))?;
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| CliError::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| CliError::io(path, e))
}

pub fn read_all(path: &Path) -> CliResult<Vec<RunManifest>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines().map(|l| serde_json::from_str(l).map_err(|e| CliError::format(path, e))).collect()
}
