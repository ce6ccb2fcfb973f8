//! Loading run configurations: JSON file (or a previous manifest), dotted
//! `--set` overrides, then typed decoding.

use std::path::{Path, PathBuf};

use edgeview::workflow::{ExperimentConfig, Method};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

/// Full configuration of one CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    /// Second method for paired comparisons.
    #[serde(default)]
    pub compare_with: Option<Method>,
    /// NRMSE levels whose first crossing is reported by comparisons.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; all cores when unset.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_thresholds() -> Vec<f64> {
    vec![0.3, 0.2, 0.1]
}

/// Reads a JSON document. A manifest written by an earlier run is accepted
/// and its resolved config is used.
pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Config(format!("{}: file not found", path.display()))
        } else {
            CliError::Config(format!("{}: {e}", path.display()))
        }
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
    })?;
    match value {
        Value::Object(mut map) if map.get("tool").and_then(Value::as_str) == Some(crate::TOOL) => {
            map.remove("config").ok_or_else(|| {
                CliError::Config(format!("{}: manifest has no config section", path.display()))
            })
        }
        v => Ok(v),
    }
}

/// Parses `KEY=VALUE`; the value is JSON when it parses as JSON, a string
/// otherwise.
pub fn parse_override(raw: &str) -> Result<(Vec<String>, Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{raw}` is not KEY=VALUE")))?;
    let path: Vec<String> = key.split('.').map(str::to_owned).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Config(format!("override `{raw}` has an empty key segment")));
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_owned()));
    Ok((path, value))
}

pub fn apply_override(root: &mut Value, path: &[String], value: Value) -> Result<(), CliError> {
    let mut node = root;
    for (i, key) in path.iter().enumerate() {
        if !node.is_object() {
            return Err(CliError::Config(format!(
                "cannot set `{}`: `{}` is not an object",
                path.join("."),
                path[..i].join(".")
            )));
        }
        let map = node.as_object_mut().expect("checked above");
        if i + 1 == path.len() {
            map.insert(key.clone(), value);
            return Ok(());
        }
        node = map.entry(key.clone()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

fn lookup<'a>(root: &'a Value, path: &[String]) -> Option<&'a Value> {
    path.iter().try_fold(root, |node, key| node.get(key))
}

/// Applies overrides and decodes. Overrides naming keys the config type does
/// not know are rejected rather than silently dropped.
pub fn resolve<T>(mut raw: Value, overrides: &[String]) -> Result<(T, Value), CliError>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut paths = Vec::new();
    for o in overrides {
        let (path, value) = parse_override(o)?;
        apply_override(&mut raw, &path, value)?;
        paths.push(path);
    }
    let typed: T = serde_json::from_value(raw).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    let resolved = serde_json::to_value(&typed).map_err(|e| CliError::Runtime(e.to_string()))?;
    for path in paths {
        if lookup(&resolved, &path).is_none() {
            return Err(CliError::Config(format!("unknown config key `{}`", path.join("."))));
        }
    }
    Ok((typed, resolved))
}
