//! Training orchestration: configuration, the stop predicate, a
//! deterministic multi-worker training loop with gradient accumulation, and
//! bit-exact checkpoints.

mod checkpoint;
mod config;
mod engine;

use std::path::PathBuf;

pub use checkpoint::{
    load_checkpoint, restore_model, save_checkpoint, AdamSnapshot, Checkpoint, CheckpointMeta, TensorEntry,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{
    CheckpointSection, DataConfig, EvalSection, OptimConfig, TaskSection, TrainConfig, TrainerKind,
};
pub use engine::{train, Objective, StopReason, TrainOptions, TrainReport};

use crate::models::ModelError;
use crate::registry::RegistryError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Resolve(#[from] RegistryError),
    #[error("training data missing: {0}")]
    DataMissing(String),
    #[error("non-finite loss at update {update} (epoch {epoch}); last good checkpoint kept")]
    NonFiniteLoss { epoch: u64, update: u64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt tensor directory: {0}")]
    CorruptDirectory(String),
    #[error("config digest {found} differs from expected {expected}")]
    DigestMismatch { expected: String, found: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Resolve(#[from] RegistryError),
}

/// Progress of a training run; everything needed to resume exactly.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: u64,
    pub num_updates: u64,
    pub lr: f64,
    pub best_valid_loss: Option<f64>,
    /// Seed of the per-epoch shuffle; the order of epoch `e` is a function of
    /// `(seed, e)` alone, so this plus `cursor` is the whole RNG state.
    pub seed: u64,
    /// Accumulation windows of the current epoch already applied.
    pub cursor: u64,
    /// Loss sum and weight of the windows applied so far this epoch.
    pub epoch_loss_sum: f64,
    pub epoch_weight: f64,
}

impl TrainState {
    pub fn new(cfg: &OptimConfig) -> Self {
        Self {
            epoch: 0,
            num_updates: 0,
            lr: cfg.lr,
            best_valid_loss: None,
            seed: cfg.seed,
            cursor: 0,
            epoch_loss_sum: 0.0,
            epoch_weight: 0.0,
        }
    }
}

/// True iff `lr > min_lr`, the next epoch index (1-based) is within
/// `max_epoch`, and fewer than `max_update` updates have been applied.
pub fn should_continue(state: &TrainState, cfg: &OptimConfig) -> bool {
    state.lr > cfg.min_lr && state.epoch < cfg.max_epoch && state.num_updates < cfg.max_update
}
