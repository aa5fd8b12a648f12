use super::objectives::wrap;
use super::{FieldSource, FieldSpec, Predictor, Samples, Task, TaskError};
use crate::evalmetrics::{rank_of, EvalItems};
use crate::models::{as_language_model, NbowEncoder, Seq2Seq, Side};
use crate::trainer::Objective;

use super::{LmObjective, RetrievalObjective, Seq2SeqObjective};

const CODE: FieldSpec = FieldSpec {
    name: "code",
    source: FieldSource::Code,
};

fn unknown_metric(task: &str, metric: &str) -> TaskError {
    TaskError::Config(format!("task `{task}` has no metric `{metric}`"))
}

/// Next-token completion with a language model.
pub struct CompletionTask;

impl Task for CompletionTask {
    fn name(&self) -> &'static str {
        "completion"
    }

    fn fields(&self) -> &'static [FieldSpec] {
        &[CODE]
    }

    fn models(&self) -> &'static [&'static str] {
        &["seqrnn", "ngram"]
    }

    fn metrics(&self) -> &'static [&'static str] {
        &["mrr", "perplexity"]
    }

    fn objective(&self, train: Samples, valid: Samples) -> Box<dyn Objective> {
        let seqs = |s: Samples| s.into_iter().map(|f| wrap(&f[0])).collect();
        Box::new(LmObjective::new(seqs(train), seqs(valid)))
    }

    fn eval_items(&self, predictor: &Predictor, samples: &Samples, metric: &str) -> Result<EvalItems, TaskError> {
        let lm = as_language_model(predictor.model())
            .ok_or_else(|| TaskError::BadInput("completion needs a language model".into()))?;
        let seqs: Vec<Vec<u32>> = samples.iter().map(|s| wrap(&s[0])).collect();
        match metric {
            "mrr" => {
                let mut ranks = Vec::new();
                for seq in &seqs {
                    for (t, dist) in lm.prefix_distributions(seq).iter().enumerate() {
                        ranks.push(rank_of(dist, seq[t + 1] as usize));
                    }
                }
                Ok(EvalItems::Ranks(ranks))
            }
            "perplexity" => Ok(EvalItems::LogProbs(seqs.iter().flat_map(|s| lm.sequence_log_probs(s)).collect())),
            other => Err(unknown_metric(self.name(), other)),
        }
    }
}

/// Comment generation from code with an encoder-decoder.
pub struct SummarizationTask;

impl Task for SummarizationTask {
    fn name(&self) -> &'static str {
        "summarization"
    }

    fn fields(&self) -> &'static [FieldSpec] {
        &[
            CODE,
            FieldSpec {
                name: "doc",
                source: FieldSource::Docstring,
            },
        ]
    }

    fn models(&self) -> &'static [&'static str] {
        &["seq2seq"]
    }

    fn metrics(&self) -> &'static [&'static str] {
        &["bleu", "rouge_l"]
    }

    fn objective(&self, train: Samples, valid: Samples) -> Box<dyn Objective> {
        let pairs = |s: Samples| s.into_iter().map(|f| (f[0].clone(), wrap(&f[1]))).collect();
        Box::new(Seq2SeqObjective::new(pairs(train), pairs(valid)))
    }

    fn eval_items(&self, predictor: &Predictor, samples: &Samples, metric: &str) -> Result<EvalItems, TaskError> {
        if !self.metrics().contains(&metric) {
            return Err(unknown_metric(self.name(), metric));
        }
        let s2s = predictor
            .model()
            .as_any()
            .downcast_ref::<Seq2Seq>()
            .ok_or_else(|| TaskError::BadInput("summarization needs a seq2seq model".into()))?;
        let words = |ids: &[u32]| -> Vec<String> {
            let (text, _) = predictor.decode_field(1, ids);
            text.split_whitespace().map(str::to_string).collect()
        };
        let mut hypotheses = Vec::with_capacity(samples.len());
        let mut references = Vec::with_capacity(samples.len());
        for s in samples {
            hypotheses.push(words(&s2s.greedy_decode(&s[0])?));
            references.push(words(&s[1]));
        }
        Ok(EvalItems::Texts { hypotheses, references })
    }
}

/// Natural-language code search with a dual encoder.
pub struct RetrievalTask;

/// Candidate pool size when ranking held-out pairs.
pub const RETRIEVAL_EVAL_POOL: usize = 32;

impl Task for RetrievalTask {
    fn name(&self) -> &'static str {
        "retrieval"
    }

    fn fields(&self) -> &'static [FieldSpec] {
        &[
            CODE,
            FieldSpec {
                name: "query",
                source: FieldSource::Docstring,
            },
        ]
    }

    fn models(&self) -> &'static [&'static str] {
        &["nbow"]
    }

    fn metrics(&self) -> &'static [&'static str] {
        &["mrr"]
    }

    fn objective(&self, train: Samples, valid: Samples) -> Box<dyn Objective> {
        let pairs = |s: Samples| s.into_iter().map(|f| (f[0].clone(), f[1].clone())).collect();
        Box::new(RetrievalObjective::new(pairs(train), pairs(valid)))
    }

    fn eval_items(&self, predictor: &Predictor, samples: &Samples, metric: &str) -> Result<EvalItems, TaskError> {
        if metric != "mrr" {
            return Err(unknown_metric(self.name(), metric));
        }
        let nbow = predictor
            .model()
            .as_any()
            .downcast_ref::<NbowEncoder>()
            .ok_or_else(|| TaskError::BadInput("retrieval needs an nbow model".into()))?;
        let mut ranks = Vec::new();
        for pool in samples.chunks(RETRIEVAL_EVAL_POOL) {
            let codes = pool
                .iter()
                .map(|s| nbow.encode(&s[0], Side::Code))
                .collect::<Result<Vec<_>, _>>()?;
            for (i, s) in pool.iter().enumerate() {
                let q = nbow.encode(&s[1], Side::Query)?;
                let scores: Vec<f64> = codes.iter().map(|c| nbow.score(&q, c)).collect();
                ranks.push(rank_of(&scores, i));
            }
        }
        Ok(EvalItems::Ranks(ranks))
    }
}
