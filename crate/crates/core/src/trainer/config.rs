use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainError;
use crate::models::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub lr: f64,
    pub min_lr: f64,
    /// Factor applied to the learning rate at the end of every epoch.
    pub lr_shrink: f64,
    pub max_epoch: u64,
    pub max_update: u64,
    /// Batches whose gradients are accumulated into one update.
    pub update_freq: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            min_lr: 1e-6,
            lr_shrink: 0.95,
            max_epoch: 10,
            max_update: 1_000_000,
            update_freq: 1,
            clip_norm: 5.0,
            seed: 1,
            workers: 1,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        // Written negated so a NaN learning rate is rejected too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.lr > self.min_lr) {
            return bad("lr must exceed min_lr at the start");
        }
        if self.update_freq == 0 {
            return bad("update_freq must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if !(self.lr_shrink > 0.0 && self.lr_shrink <= 1.0) {
            return bad("lr_shrink must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// JSONL corpus files (used by preprocessing).
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    /// Where preprocessing writes vocabularies, merges and shards.
    pub data_dir: PathBuf,
    pub tokenizer: String,
    /// Number of BPE merges learned when `tokenizer` is `bpe`.
    pub bpe_merges: usize,
    pub min_pair_freq: u64,
    pub min_count: u64,
    pub max_vocab: usize,
    pub batch_size: usize,
    pub bptt_len: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            valid: None,
            data_dir: PathBuf::from("data-bin"),
            tokenizer: "space".into(),
            bpe_merges: 200,
            min_pair_freq: 2,
            min_count: 1,
            max_vocab: 10_000,
            batch_size: 16,
            bptt_len: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSection {
    pub name: String,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            name: "completion".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    /// Multi-worker loop with gradient accumulation.
    #[default]
    Default,
    /// Single-threaded loop, one update per batch.
    Simple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckpointSection {
    pub save_dir: PathBuf,
}

impl Default for CheckpointSection {
    fn default() -> Self {
        Self {
            save_dir: PathBuf::from("checkpoints"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    /// Metric name; the task's default when absent.
    pub metric: Option<String>,
}

/// The JSON training configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub task: TaskSection,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub optimization: OptimConfig,
    pub trainer: TrainerKind,
    pub checkpoint: CheckpointSection,
    pub eval: EvalSection,
}

impl TrainConfig {
    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let mut cfg: TrainConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.data.train.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.valid.as_mut() {
            fix(p);
        }
        fix(&mut self.data.data_dir);
        fix(&mut self.checkpoint.save_dir);
    }

    /// Model hyper-parameters with data-level settings folded in.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            bptt_len: self.data.bptt_len,
            ..self.model.clone()
        }
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
