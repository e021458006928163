//! Versioned JSON snapshots of trained networks.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::train::TrainingConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub network: Network,
    pub training: TrainingConfig,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(network: Network, training: TrainingConfig) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed: training.seed,
            network,
            training,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
        fs::write(path, json).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            found => {
                return Err(Error::Data(format!(
                    "{}: unsupported checkpoint version {found:?}, expected {CHECKPOINT_VERSION}",
                    path.display()
                )))
            }
        }
        let ckpt: Checkpoint = serde_json::from_value(value)?;
        // Re-run the width checks on the decoded layers.
        Network::new(ckpt.network.layers.clone())?;
        Ok(ckpt)
    }
}
