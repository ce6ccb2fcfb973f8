use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedNormalization {
    pub image_prefix: String,
    pub min: f64,
    pub max: f64,
}

/// Machine-readable record of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// `--set` arguments exactly as given.
    pub overrides: Vec<String>,
    /// Resolved config with every default filled in.
    pub config: Value,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub status: String,
    pub error: Option<String>,
    pub truncated: bool,
    pub artifacts: Vec<PathBuf>,
    pub image_normalization: Vec<NamedNormalization>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(command: &str, overrides: &[String], config: Value) -> Self {
        Self {
            tool: crate::TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            overrides: overrides.to_vec(),
            config,
            started_unix: unix_now(),
            finished_unix: 0.0,
            status: "running".into(),
            error: None,
            truncated: false,
            artifacts: Vec::new(),
            image_normalization: Vec::new(),
        }
    }

    pub fn write(&mut self, dir: &Path) -> Result<PathBuf, CliError> {
        self.finished_unix = unix_now();
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
