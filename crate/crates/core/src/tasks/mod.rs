//! The three demo tasks and the pipeline that drives them: preprocessing,
//! training from a config file, evaluation, and prediction from a model
//! directory.

mod builtin;
mod objectives;
mod pipeline;
mod predictor;

use std::path::PathBuf;

pub use builtin::{CompletionTask, RetrievalTask, SummarizationTask};
pub use objectives::{LmObjective, RetrievalObjective, Seq2SeqObjective};
pub use pipeline::{
    evaluate, load_split, preprocess, train_from_config, EvalReport, FieldManifest, ModelDirConfig,
    PreprocessManifest, Samples, TrainOutcome, MODEL_CHECKPOINT, MODEL_CONFIG, MODEL_INDEX,
};
pub use predictor::{
    Candidate, CompleteResponse, IndexEntry, Predictor, SearchHit, SearchResponse, SummarizeResponse,
};

use crate::corpus::CorpusError;
use crate::evalmetrics::{EvalItems, MetricError};
use crate::models::{ModelError, VocabSizes};
use crate::registry::RegistryError;
use crate::trainer::{CheckpointError, Objective, TrainError};

/// Which part of a [`crate::corpus::CodeRecord`] a field is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSource {
    Code,
    Docstring,
}

/// One tokenized input stream of a task (e.g. code and comment).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: &'static str,
    pub source: FieldSource,
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("model `{model}` cannot serve task `{task}`")]
    Unsupported { task: String, model: String },
}

impl TaskError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TaskError::Io {
            path: path.into(),
            source,
        }
    }
}

/// A registered task: which fields it reads, which models fit it, how to
/// build its training objective and how to score a trained model.
pub trait Task: Send + Sync {
    fn name(&self) -> &'static str;

    fn fields(&self) -> &'static [FieldSpec];

    /// Compatible model names; the first is the default.
    fn models(&self) -> &'static [&'static str];

    /// Compatible metric names; the first is the default.
    fn metrics(&self) -> &'static [&'static str];

    /// Vocabulary sizes handed to the model factory, from the per-field
    /// vocabulary sizes in [`Task::fields`] order.
    fn vocab_sizes(&self, field_vocabs: &[usize]) -> VocabSizes {
        VocabSizes {
            source: field_vocabs[0],
            target: *field_vocabs.last().expect("at least one field"),
        }
    }

    /// Training objective over id-encoded samples (`sample[field]`).
    fn objective(&self, train: Samples, valid: Samples) -> Box<dyn Objective>;

    /// Runs the predictor over held-out samples and collects what `metric`
    /// needs.
    fn eval_items(&self, predictor: &Predictor, samples: &Samples, metric: &str) -> Result<EvalItems, TaskError>;
}
