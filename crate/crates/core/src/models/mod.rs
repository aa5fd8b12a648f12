//! Models for the three demo tasks: n-gram and recurrent language models
//! (completion), an NBOW dual encoder (retrieval) and a small encoder-decoder
//! (comment generation).

mod lm;
mod nbow;
mod ngram;
mod rnnlm;
mod seq2seq;

use std::any::Any;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ncore::{NcoreError, ParamSet, Tensor, INIT_RANGE};

pub use lm::{as_language_model, lm_topk, LanguageModel};
pub use nbow::{retrieval_loss, NbowConfig, NbowEncoder, Side};
pub use ngram::{ngram_train, NgramModel};
pub use rnnlm::{RnnLm, RnnLmConfig};
pub use seq2seq::{Seq2Seq, Seq2SeqConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NcoreError),
    #[error("empty input")]
    EmptyInput,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("batch of {0} is too small; in-batch softmax needs at least 2 pairs")]
    BatchTooSmall(usize),
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("state tensor `{0}` missing or malformed")]
    BadState(String),
}

/// Hyper-parameters shared by every model family; each model reads the
/// fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub name: String,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// n-gram order.
    pub order: usize,
    /// n-gram interpolation weight.
    pub lambda: f64,
    pub bptt_len: usize,
    /// Similarity scale of the retrieval softmax.
    pub scale: f64,
    pub max_decode_len: usize,
    /// Feed the encoder the source in reverse order.
    pub reverse_source: bool,
    pub init_range: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            embed_dim: 16,
            hidden_dim: 32,
            order: 3,
            lambda: 0.7,
            bptt_len: 32,
            scale: 10.0,
            max_decode_len: 20,
            reverse_source: false,
            init_range: INIT_RANGE,
        }
    }
}

/// Vocabulary sizes a task hands to a model factory. Single-vocabulary
/// models use `source`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSizes {
    pub source: usize,
    pub target: usize,
}

impl VocabSizes {
    pub fn shared(v: usize) -> Self {
        Self { source: v, target: v }
    }
}

/// Object-safe view of any registered model.
pub trait NccModel: Send + Sync {
    /// Registry name of the model family.
    fn kind(&self) -> &'static str;

    fn params(&self) -> &ParamSet;

    fn params_mut(&mut self) -> &mut ParamSet;

    /// Named tensors that fully determine the model (used by checkpoints).
    fn state_tensors(&self) -> Vec<(String, Tensor)> {
        self.params()
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }

    /// Restores what [`NccModel::state_tensors`] produced.
    fn load_state_tensors(&mut self, tensors: Vec<(String, Tensor)>) -> Result<(), ModelError> {
        let params = self.params_mut();
        if tensors.len() != params.len() {
            return Err(ModelError::BadState(format!(
                "expected {} tensors, found {}",
                params.len(),
                tensors.len()
            )));
        }
        for (name, value) in tensors {
            let idx = params.index_of(&name).ok_or_else(|| ModelError::BadState(name.clone()))?;
            if params.value(idx).shape() != value.shape() {
                return Err(ModelError::BadState(name));
            }
            *params.value_mut(idx) = value;
        }
        Ok(())
    }

    fn as_any(&self) -> &dyn Any;

    fn as_any_mut(&mut self) -> &mut dyn Any;
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn check_ids(ids: &[u32], vocab: usize) -> Result<(), ModelError> {
    match ids.iter().find(|&&id| id as usize >= vocab) {
        Some(&id) => Err(ModelError::TokenOutOfRange { id, vocab }),
        None => Ok(()),
    }
}

/// Index of the largest value; ties go to the smaller index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
