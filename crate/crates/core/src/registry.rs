//! Process-wide name → factory tables for tasks, models, tokenizers and
//! metrics. Built-ins are installed once by [`install_builtins`]; after that
//! the global registry is read-only.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    BpeTokenizer, CorpusError, LexTokenizer, LinearizedTokenizer, MergeTable, SpaceTokenizer, Tokenizer,
};
use crate::evalmetrics::{BleuConfig, BleuMetric, Metric, MrrMetric, PerplexityMetric, RougeLMetric, DEFAULT_CUTOFF};
use crate::models::{
    ModelConfig, ModelError, NbowConfig, NbowEncoder, NccModel, NgramModel, RnnLm, RnnLmConfig, Seq2Seq,
    Seq2SeqConfig, VocabSizes,
};
use crate::tasks::{CompletionTask, RetrievalTask, SummarizationTask, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegistryKind {
    Task,
    Model,
    Tokenizer,
    Metric,
}

impl RegistryKind {
    pub const ALL: [RegistryKind; 4] = [
        RegistryKind::Task,
        RegistryKind::Model,
        RegistryKind::Tokenizer,
        RegistryKind::Metric,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegistryKind::Task => "task",
            RegistryKind::Model => "model",
            RegistryKind::Tokenizer => "tokenizer",
            RegistryKind::Metric => "metric",
        }
    }
}

impl fmt::Display for RegistryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type TaskFactory = Arc<dyn Fn() -> Box<dyn Task> + Send + Sync>;
pub type ModelFactory =
    Arc<dyn Fn(&ModelConfig, VocabSizes, &mut ChaCha8Rng) -> Result<Box<dyn NccModel>, ModelError> + Send + Sync>;
pub type TokenizerFactory =
    Arc<dyn Fn(Option<MergeTable>) -> Result<Box<dyn Tokenizer>, CorpusError> + Send + Sync>;
pub type MetricFactory = Arc<dyn Fn() -> Box<dyn Metric> + Send + Sync>;

/// A constructor handle; the variant fixes which namespace it belongs to.
#[derive(Clone)]
pub enum Factory {
    Task(TaskFactory),
    Model(ModelFactory),
    Tokenizer(TokenizerFactory),
    Metric(MetricFactory),
}

impl Factory {
    pub fn kind(&self) -> RegistryKind {
        match self {
            Factory::Task(_) => RegistryKind::Task,
            Factory::Model(_) => RegistryKind::Model,
            Factory::Tokenizer(_) => RegistryKind::Tokenizer,
            Factory::Metric(_) => RegistryKind::Metric,
        }
    }

    /// Whether both handles point at the same constructor.
    pub fn same_as(&self, other: &Factory) -> bool {
        match (self, other) {
            (Factory::Task(a), Factory::Task(b)) => Arc::ptr_eq(a, b),
            (Factory::Model(a), Factory::Model(b)) => Arc::ptr_eq(a, b),
            (Factory::Tokenizer(a), Factory::Tokenizer(b)) => Arc::ptr_eq(a, b),
            (Factory::Metric(a), Factory::Metric(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl fmt::Debug for Factory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Factory::{}", self.kind())
    }
}

#[derive(Debug, Clone)]
pub struct RegistryEntry {
    pub kind: RegistryKind,
    pub name: String,
    pub description: String,
    pub factory: Factory,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: RegistryKind, name: String },
    #[error("invalid {kind} name `{name}`: names must match [a-z0-9_]+")]
    InvalidName { kind: RegistryKind, name: String },
    #[error("unknown {kind} `{name}`; available: {}", available.join(", "))]
    UnknownName {
        kind: RegistryKind,
        name: String,
        available: Vec<String>,
    },
    #[error("a {actual} factory cannot be registered as a {expected}")]
    KindMismatch {
        expected: RegistryKind,
        actual: RegistryKind,
    },
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

#[derive(Debug, Default, Clone)]
pub struct Registry {
    entries: Vec<RegistryEntry>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding every built-in task, model, tokenizer and metric.
    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        install_builtins(&mut r).expect("built-in names are valid and unique");
        r
    }

    pub fn register(
        &mut self,
        kind: RegistryKind,
        name: &str,
        description: &str,
        factory: Factory,
    ) -> Result<(), RegistryError> {
        if !valid_name(name) {
            return Err(RegistryError::InvalidName {
                kind,
                name: name.to_string(),
            });
        }
        if factory.kind() != kind {
            return Err(RegistryError::KindMismatch {
                expected: kind,
                actual: factory.kind(),
            });
        }
        if self.entries.iter().any(|e| e.kind == kind && e.name == name) {
            return Err(RegistryError::DuplicateName {
                kind,
                name: name.to_string(),
            });
        }
        self.entries.push(RegistryEntry {
            kind,
            name: name.to_string(),
            description: description.to_string(),
            factory,
        });
        Ok(())
    }

    pub fn entry(&self, kind: RegistryKind, name: &str) -> Result<&RegistryEntry, RegistryError> {
        self.entries
            .iter()
            .find(|e| e.kind == kind && e.name == name)
            .ok_or_else(|| RegistryError::UnknownName {
                kind,
                name: name.to_string(),
                available: self.list(kind),
            })
    }

    /// The factory registered under `(kind, name)`; nothing is constructed.
    pub fn resolve(&self, kind: RegistryKind, name: &str) -> Result<Factory, RegistryError> {
        self.entry(kind, name).map(|e| e.factory.clone())
    }

    /// Names of `kind` in registration order.
    pub fn list(&self, kind: RegistryKind) -> Vec<String> {
        self.entries_of(kind).map(|e| e.name.clone()).collect()
    }

    pub fn entries_of(&self, kind: RegistryKind) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    pub fn task(&self, name: &str) -> Result<Box<dyn Task>, RegistryError> {
        match self.resolve(RegistryKind::Task, name)? {
            Factory::Task(f) => Ok(f()),
            _ => unreachable!("kind checked at registration"),
        }
    }

    pub fn model_factory(&self, name: &str) -> Result<ModelFactory, RegistryError> {
        match self.resolve(RegistryKind::Model, name)? {
            Factory::Model(f) => Ok(f),
            _ => unreachable!("kind checked at registration"),
        }
    }

    pub fn tokenizer_factory(&self, name: &str) -> Result<TokenizerFactory, RegistryError> {
        match self.resolve(RegistryKind::Tokenizer, name)? {
            Factory::Tokenizer(f) => Ok(f),
            _ => unreachable!("kind checked at registration"),
        }
    }

    pub fn metric(&self, name: &str) -> Result<Box<dyn Metric>, RegistryError> {
        match self.resolve(RegistryKind::Metric, name)? {
            Factory::Metric(f) => Ok(f()),
            _ => unreachable!("kind checked at registration"),
        }
    }

    /// `kind name description` lines, in registration order.
    pub fn render(&self, kind: RegistryKind) -> String {
        self.entries_of(kind)
            .map(|e| format!("{} {} {}\n", e.kind, e.name, e.description))
            .collect()
    }
}

/// The process-wide registry, populated with the built-ins on first use.
pub fn global() -> &'static Registry {
    static GLOBAL: OnceLock<Registry> = OnceLock::new();
    GLOBAL.get_or_init(Registry::with_builtins)
}

fn model(f: impl Fn(&ModelConfig, VocabSizes, &mut ChaCha8Rng) -> Result<Box<dyn NccModel>, ModelError> + Send + Sync + 'static) -> Factory {
    Factory::Model(Arc::new(f))
}

fn tokenizer(f: impl Fn(Option<MergeTable>) -> Result<Box<dyn Tokenizer>, CorpusError> + Send + Sync + 'static) -> Factory {
    Factory::Tokenizer(Arc::new(f))
}

fn metric(f: impl Fn() -> Box<dyn Metric> + Send + Sync + 'static) -> Factory {
    Factory::Metric(Arc::new(f))
}

pub fn install_builtins(r: &mut Registry) -> Result<(), RegistryError> {
    use RegistryKind::*;

    r.register(Task, "completion", "next-token prediction over code, scored by MRR", Factory::Task(Arc::new(|| Box::new(CompletionTask))))?;
    r.register(Task, "summarization", "comment generation from code, scored by BLEU", Factory::Task(Arc::new(|| Box::new(SummarizationTask))))?;
    r.register(Task, "retrieval", "natural-language code search, scored by MRR", Factory::Task(Arc::new(|| Box::new(RetrievalTask))))?;

    r.register(Model, "ngram", "interpolated n-gram language model", model(|c, v, _| {
        Ok(Box::new(NgramModel::new(c.order, c.lambda, v.source)?))
    }))?;
    r.register(Model, "seqrnn", "recurrent (Elman) language model", model(|c, v, rng| {
        let cfg = RnnLmConfig {
            vocab_size: v.source,
            embed_dim: c.embed_dim,
            hidden_dim: c.hidden_dim,
            bptt_len: c.bptt_len,
        };
        Ok(Box::new(RnnLm::new(cfg, c.init_range, rng)?))
    }))?;
    r.register(Model, "seq2seq", "recurrent encoder-decoder with greedy decoding", model(|c, v, rng| {
        let cfg = Seq2SeqConfig {
            src_vocab: v.source,
            tgt_vocab: v.target,
            embed_dim: c.embed_dim,
            hidden_dim: c.hidden_dim,
            max_decode_len: c.max_decode_len,
            reverse_source: c.reverse_source,
        };
        Ok(Box::new(Seq2Seq::new(cfg, c.init_range, rng)?))
    }))?;
    r.register(Model, "nbow", "neural bag-of-words dual encoder", model(|c, v, rng| {
        let cfg = NbowConfig {
            code_vocab: v.source,
            query_vocab: v.target,
            embed_dim: c.embed_dim,
            scale: c.scale,
        };
        Ok(Box::new(NbowEncoder::new(cfg, c.init_range, rng)?))
    }))?;

    r.register(Tokenizer, "space", "split on whitespace", tokenizer(|_| Ok(Box::new(SpaceTokenizer))))?;
    r.register(Tokenizer, "bpe", "byte-pair-encoded subwords of whitespace tokens", tokenizer(|merges| {
        let table = merges.ok_or_else(|| CorpusError::BadMerges("bpe tokenizer needs a merge table".into()))?;
        Ok(Box::new(BpeTokenizer::new(table)))
    }))?;
    r.register(Tokenizer, "lex", "indentation-aware lexer tokens", tokenizer(|_| Ok(Box::new(LexTokenizer))))?;
    r.register(Tokenizer, "linearized", "pre-order block-tree linearization", tokenizer(|_| Ok(Box::new(LinearizedTokenizer))))?;

    r.register(Metric, "mrr", "mean reciprocal rank with cutoff 10", metric(|| Box::new(MrrMetric { cutoff: DEFAULT_CUTOFF })))?;
    r.register(Metric, "bleu", "corpus BLEU-4", metric(|| Box::new(BleuMetric(BleuConfig::default()))))?;
    r.register(Metric, "rouge_l", "mean ROUGE-L F1", metric(|| Box::new(RougeLMetric { beta: 1.0 })))?;
    r.register(Metric, "perplexity", "exp of mean token negative log-likelihood", metric(|| Box::new(PerplexityMetric)))?;
    Ok(())
}
