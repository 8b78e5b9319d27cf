//! One-file run configuration: model, schedule, and data paths together.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

/// Where a run reads its corpus and writes its artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Corpus file (one JSON record per line, sibling CoNLL-U files).
    pub corpus: PathBuf,
    /// Output directory for checkpoints, the loss trace, and the resolved
    /// configuration. Created if missing.
    pub out_dir: PathBuf,
    /// Updates between periodic checkpoints; 0 keeps only the final one.
    #[serde(default)]
    pub checkpoint_interval: u64,
}

/// Everything a run needs, loaded from a single TOML file. Unknown keys
/// anywhere in the file are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed for parameter init, batching, and dropout streams.
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| {
            CoreError::config(format!("bad run config {}: {e}", path.display()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    /// The fully resolved configuration as TOML, logged by every run.
    pub fn resolved_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| CoreError::config(format!("cannot render config: {e}")))
    }
}
