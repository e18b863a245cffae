use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{write_text, MetricReport};
use super::{ExperimentConfig, HarnessError};
use crate::autodiff::Adam;
use crate::data::RngState;
use crate::layers::Mlp;

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Complete training state at a step boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub step: usize,
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub generator_optimizer: Adam,
    pub discriminator_optimizer: Adam,
    pub data_rng: RngState,
    pub latent_rng: RngState,
    pub last_losses: (f64, f64),
    pub report: MetricReport,
    pub low_coverage_streak: usize,
    pub collapsed: bool,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, HarnessError> {
        serde_json::to_string(self).map_err(|e| HarnessError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| HarnessError::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(HarnessError::Checkpoint(format!(
                "unsupported checkpoint format {} (expected {CHECKPOINT_FORMAT})",
                ckpt.format
            )));
        }
        let hash = ckpt.config.hash();
        if hash != ckpt.config_hash {
            return Err(HarnessError::Checkpoint(format!(
                "config hash mismatch: stored {}, computed {hash}",
                ckpt.config_hash
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        write_text(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }
}

pub fn checkpoint_file_name(step: usize) -> String {
    format!("step_{step:08}.json")
}
