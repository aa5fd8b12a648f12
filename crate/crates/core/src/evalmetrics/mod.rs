//! Evaluation metrics: MRR for ranking tasks, corpus BLEU and ROUGE-L for
//! generated text, perplexity for language models.

mod bleu;
mod ranking;
mod rouge;

use crate::models::LanguageModel;

pub use bleu::{bleu, BleuConfig};
pub use ranking::{mrr, rank_of, RankedPrediction, DEFAULT_CUTOFF};
pub use rouge::{lcs_len, rouge_l, rouge_l_corpus, RougeScore};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("metric needs at least one item")]
    EmptyInput,
    #[error("{hypotheses} hypotheses but {references} references")]
    LengthMismatch { hypotheses: usize, references: usize },
    #[error("metric `{metric}` cannot score {got} items")]
    WrongInput { metric: &'static str, got: &'static str },
}

/// What a task hands to a metric after running its model over a split.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalItems {
    /// Rank of the gold answer per query (`None` = not retrieved at all).
    Ranks(Vec<Option<usize>>),
    /// Generated token sequences with their single references.
    Texts {
        hypotheses: Vec<Vec<String>>,
        references: Vec<Vec<String>>,
    },
    /// Natural log-probability of every predicted token.
    LogProbs(Vec<f64>),
}

impl EvalItems {
    fn label(&self) -> &'static str {
        match self {
            EvalItems::Ranks(_) => "ranks",
            EvalItems::Texts { .. } => "texts",
            EvalItems::LogProbs(_) => "log-probabilities",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            EvalItems::Ranks(r) => r.len(),
            EvalItems::Texts { hypotheses, .. } => hypotheses.len(),
            EvalItems::LogProbs(lp) => lp.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A registered metric: a named scoring function over [`EvalItems`].
pub trait Metric: Send + Sync {
    fn name(&self) -> &'static str;

    fn compute(&self, items: &EvalItems) -> Result<f64, MetricError>;
}

pub struct MrrMetric {
    pub cutoff: usize,
}

impl Metric for MrrMetric {
    fn name(&self) -> &'static str {
        "mrr"
    }

    fn compute(&self, items: &EvalItems) -> Result<f64, MetricError> {
        match items {
            EvalItems::Ranks(ranks) => {
                let ranks: Vec<RankedPrediction> = ranks.iter().map(|&r| RankedPrediction::new(r)).collect();
                mrr(&ranks, self.cutoff)
            }
            other => Err(MetricError::WrongInput { metric: "mrr", got: other.label() }),
        }
    }
}

pub struct BleuMetric(pub BleuConfig);

impl Metric for BleuMetric {
    fn name(&self) -> &'static str {
        "bleu"
    }

    fn compute(&self, items: &EvalItems) -> Result<f64, MetricError> {
        match items {
            EvalItems::Texts { hypotheses, references } => bleu(hypotheses, references, self.0),
            other => Err(MetricError::WrongInput { metric: "bleu", got: other.label() }),
        }
    }
}

pub struct RougeLMetric {
    pub beta: f64,
}

impl Metric for RougeLMetric {
    fn name(&self) -> &'static str {
        "rouge_l"
    }

    fn compute(&self, items: &EvalItems) -> Result<f64, MetricError> {
        match items {
            EvalItems::Texts { hypotheses, references } => rouge_l_corpus(hypotheses, references, self.beta),
            other => Err(MetricError::WrongInput { metric: "rouge_l", got: other.label() }),
        }
    }
}

pub struct PerplexityMetric;

impl Metric for PerplexityMetric {
    fn name(&self) -> &'static str {
        "perplexity"
    }

    fn compute(&self, items: &EvalItems) -> Result<f64, MetricError> {
        match items {
            EvalItems::LogProbs(lp) => perplexity_from_log_probs(lp),
            other => Err(MetricError::WrongInput { metric: "perplexity", got: other.label() }),
        }
    }
}

/// `exp(-mean(log_probs))`.
pub fn perplexity_from_log_probs(log_probs: &[f64]) -> Result<f64, MetricError> {
    if log_probs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let nll: f64 = -log_probs.iter().sum::<f64>();
    Ok((nll / log_probs.len() as f64).exp())
}

/// Perplexity of `model` over every predicted position (`t >= 1`) of every
/// sequence in `corpus`.
pub fn perplexity<M: LanguageModel + ?Sized>(model: &M, corpus: &[Vec<u32>]) -> Result<f64, MetricError> {
    let log_probs: Vec<f64> = corpus.iter().flat_map(|seq| model.sequence_log_probs(seq)).collect();
    perplexity_from_log_probs(&log_probs)
}
