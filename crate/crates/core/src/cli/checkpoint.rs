use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::encoder::{MomentumPair, Sgd};
use crate::error::{Error, Result};
use crate::views::Normalizer;

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub config: RunConfig,
    /// Completed epochs.
    pub epoch: usize,
    /// Index of the next training step.
    pub next_step: u64,
    pub pair: MomentumPair,
    pub optimizer: Sgd,
    pub rng: ChaCha8Rng,
    pub normalizer: Normalizer,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    /// Write through a temporary sibling so readers never see a torn file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_bytes()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let ckpt: Self = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Malformed(format!("checkpoint {}: {e}", path.display())))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Malformed(format!(
                "checkpoint format {} (expected {CHECKPOINT_FORMAT})",
                ckpt.format
            )));
        }
        ckpt.config.validate()?;
        Ok(ckpt)
    }
}
