use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineConfig, TraceOptions};
use crate::oracles::AccuracySchedule;
use crate::problems::problem_by_name;

/// Everything needed to reproduce a run apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Registry name of the problem.
    pub problem: String,
    pub engine: EngineConfig,
    #[serde(default)]
    pub schedule: AccuracySchedule,
    #[serde(default)]
    pub trace: TraceOptions,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read or write configuration: {0}")]
    Io(#[from] io::Error),
    #[error("configuration error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Parses and validates a JSON configuration. Unknown keys are rejected and
/// errors carry the key path.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig =
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    problem_by_name(&config.problem).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    config
        .engine
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    config
        .schedule
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(config)
}

pub fn read_config(path: &Path) -> Result<RunConfig, ConfigError> {
    parse_config(&fs::read_to_string(path)?)
}

pub fn write_config(config: &RunConfig, path: &Path) -> Result<(), ConfigError> {
    let text =
        serde_json::to_string_pretty(config).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
