//! Run configuration: model dimensions plus training hyperparameters.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sgl_core::model::ModelConfig;
use sgl_core::train::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "ModelConfig::desk")]
    pub model: ModelConfig,
    #[serde(default = "TrainConfig::desk")]
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { model: ModelConfig::desk(), train: TrainConfig::desk() }
    }
}

/// Loads a config file, or desk-scale defaults when no path is given.
pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("config {}: {e}", p.display())))
        }
    }
}
