//! Full-run checkpoints: configuration, metrics history and all learned
//! state, round-tripped bit-exactly so a resumed run equals an
//! uninterrupted one.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::MetricsRecord;
use crate::fed::{ReplayBuffer, RuntimeState, TransitionAlpha};
use crate::nn::{DenseNet, OptimizerState, ParameterSet};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FSLCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Learned state of the standalone baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandaloneState {
    pub net: DenseNet,
    pub target: ParameterSet,
    pub opt: OptimizerState,
    pub buffer: ReplayBuffer<TransitionAlpha>,
    pub learning_rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CheckpointPayload {
    Fed(RuntimeState),
    Standalone(StandaloneState),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub episodes_done: u64,
    pub metrics: Vec<MetricsRecord>,
    pub payload: CheckpointPayload,
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let body = bincode::serialize(checkpoint)
        .map_err(|e| Error::checkpoint(format!("encode failed: {e}")))?;
    let mut bytes = Vec::with_capacity(12 + body.len());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&body);
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 {
        return Err(Error::checkpoint("checkpoint file truncated"));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::checkpoint("bad magic in checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    bincode::deserialize(&bytes[12..])
        .map_err(|e| Error::checkpoint(format!("decode failed: {e}")))
}
