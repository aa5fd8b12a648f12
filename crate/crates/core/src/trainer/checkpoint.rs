//! Binary checkpoint container:
//!
//! ```text
//! "NCCKPT01" | u64 LE metadata length | metadata JSON | f64 LE payloads
//! ```
//!
//! Tensor offsets in the metadata are relative to the first payload byte.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CheckpointError, TrainState};
use crate::models::{ModelConfig, NccModel, VocabSizes};
use crate::ncore::{AdamState, Tensor};
use crate::registry::Registry;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NCCKPT01";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorGroup {
    Model,
    AdamM,
    AdamV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub group: TensorGroup,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamMeta {
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    /// Registry name of the model family.
    pub model: String,
    pub model_config: ModelConfig,
    pub vocab_sizes: VocabSizes,
    pub tensors: Vec<TensorEntry>,
    pub state: TrainState,
    pub adam: Option<AdamMeta>,
    pub config_digest: String,
}

/// Optimizer moments as stored in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamSnapshot {
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamSnapshot {
    pub fn from_state(adam: &AdamState) -> Self {
        Self {
            t: adam.t,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            m: adam.m.clone(),
            v: adam.v.clone(),
        }
    }

    pub fn into_state(self, lr: f64) -> AdamState {
        AdamState {
            m: self.m,
            v: self.v,
            t: self.t,
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model_tensors: Vec<(String, Tensor)>,
    pub adam: Option<AdamSnapshot>,
    /// Non-fatal problems found while loading (e.g. a digest mismatch).
    pub warnings: Vec<String>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a checkpoint atomically (temporary file, then rename).
#[allow(clippy::too_many_arguments)]
pub fn save_checkpoint(
    path: &Path,
    model: &dyn NccModel,
    model_config: &ModelConfig,
    vocab_sizes: VocabSizes,
    state: &TrainState,
    adam: Option<&AdamState>,
    config_digest: &str,
) -> Result<(), CheckpointError> {
    let mut entries = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    let mut push = |name: &str, group: TensorGroup, t: &Tensor| {
        let offset = payload.len() as u64;
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(TensorEntry {
            name: name.to_string(),
            group,
            shape: t.shape().to_vec(),
            dtype: "f64".into(),
            offset,
            length: payload.len() as u64 - offset,
        });
    };
    for (name, t) in model.state_tensors() {
        push(&name, TensorGroup::Model, &t);
    }
    let names: Vec<String> = model.params().iter().map(|p| p.name.clone()).collect();
    if let Some(adam) = adam {
        for (name, t) in names.iter().zip(&adam.m) {
            push(name, TensorGroup::AdamM, t);
        }
        for (name, t) in names.iter().zip(&adam.v) {
            push(name, TensorGroup::AdamV, t);
        }
    }
    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        model: model.kind().to_string(),
        model_config: model_config.clone(),
        vocab_sizes,
        tensors: entries,
        state: state.clone(),
        adam: adam.map(|a| AdamMeta {
            t: a.t,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        }),
        config_digest: config_digest.to_string(),
    };
    let meta_json = serde_json::to_vec(&meta).expect("checkpoint metadata serializes");

    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("ckpt.tmp");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp).map_err(io_err(&tmp))?);
    f.write_all(CHECKPOINT_MAGIC).map_err(io_err(&tmp))?;
    f.write_all(&(meta_json.len() as u64).to_le_bytes()).map_err(io_err(&tmp))?;
    f.write_all(&meta_json).map_err(io_err(&tmp))?;
    f.write_all(&payload).map_err(io_err(&tmp))?;
    f.into_inner()
        .map_err(|e| io_err(&tmp)(e.into_error()))?
        .sync_all()
        .map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

/// Reads and validates a checkpoint. When `expected_digest` is given and
/// differs from the stored one, a warning is logged and recorded but the
/// checkpoint still loads.
pub fn load_checkpoint(path: &Path, expected_digest: Option<&str>) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    if bytes.len() < CHECKPOINT_MAGIC.len() && CHECKPOINT_MAGIC.starts_with(&bytes) {
        return Err(CheckpointError::CorruptDirectory("file ends inside the header".into()));
    }
    if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let corrupt = |m: String| CheckpointError::CorruptDirectory(m);
    let len_bytes: [u8; 8] = bytes
        .get(8..16)
        .ok_or_else(|| corrupt("missing metadata length".into()))?
        .try_into()
        .expect("8 bytes");
    let meta_len = u64::from_le_bytes(len_bytes);
    let meta_end = 16u64
        .checked_add(meta_len)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| corrupt(format!("metadata length {meta_len} exceeds file")))? as usize;
    let meta: CheckpointMeta =
        serde_json::from_slice(&bytes[16..meta_end]).map_err(|e| corrupt(format!("metadata: {e}")))?;
    if meta.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(meta.version));
    }
    let payload = &bytes[meta_end..];

    let mut model_tensors = Vec::new();
    let (mut m, mut v) = (Vec::new(), Vec::new());
    for e in &meta.tensors {
        if e.dtype != "f64" {
            return Err(corrupt(format!("tensor {} has dtype {}", e.name, e.dtype)));
        }
        let elems: usize = e.shape.iter().product();
        if e.length != elems as u64 * 8 {
            return Err(corrupt(format!("tensor {} length {} does not match shape {:?}", e.name, e.length, e.shape)));
        }
        let end = e.offset.checked_add(e.length).filter(|&end| end <= payload.len() as u64);
        let Some(end) = end else {
            return Err(corrupt(format!(
                "tensor {} at {}+{} exceeds payload of {} bytes",
                e.name,
                e.offset,
                e.length,
                payload.len()
            )));
        };
        let data: Vec<f64> = payload[e.offset as usize..end as usize]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::from_vec(&e.shape, data).map_err(|err| corrupt(err.to_string()))?;
        match e.group {
            TensorGroup::Model => model_tensors.push((e.name.clone(), t)),
            TensorGroup::AdamM => m.push(t),
            TensorGroup::AdamV => v.push(t),
        }
    }
    let adam = match &meta.adam {
        Some(a) => {
            if m.len() != v.len() {
                return Err(corrupt("optimizer moment count mismatch".into()));
            }
            Some(AdamSnapshot {
                t: a.t,
                beta1: a.beta1,
                beta2: a.beta2,
                eps: a.eps,
                m,
                v,
            })
        }
        None => None,
    };

    let mut warnings = Vec::new();
    if let Some(expected) = expected_digest {
        if expected != meta.config_digest {
            let w = CheckpointError::DigestMismatch {
                expected: expected.to_string(),
                found: meta.config_digest.clone(),
            };
            log::warn!("{}: {w}", path.display());
            warnings.push(w.to_string());
        }
    }
    Ok(Checkpoint {
        meta,
        model_tensors,
        adam,
        warnings,
    })
}

/// Rebuilds the model stored in `ckpt` through the registry.
pub fn restore_model(ckpt: &Checkpoint, registry: &Registry) -> Result<Box<dyn NccModel>, CheckpointError> {
    let factory = registry.model_factory(&ckpt.meta.model)?;
    let mut rng = crate::models::seeded_rng(0);
    let mut model = factory(&ckpt.meta.model_config, ckpt.meta.vocab_sizes, &mut rng)?;
    model.load_state_tensors(ckpt.model_tensors.clone())?;
    Ok(model)
}
