use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pipeline::{load_field_tokenizer, read_index, read_model_dir_config};
use super::{ModelDirConfig, TaskError};
use crate::corpus::{space_tokenize, Tokenizer, Vocabulary, BOS_ID, PAD_ID};
use crate::models::{as_language_model, NbowEncoder, NccModel, Seq2Seq, Side};
use crate::registry::Registry;
use crate::trainer::{load_checkpoint, restore_model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub token: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteResponse {
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizeResponse {
    pub summary: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub results: Vec<SearchHit>,
}

/// A searchable snippet with its precomputed code encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub code: String,
    pub vector: Vec<f64>,
}

/// A trained model directory loaded for inference. Immutable once loaded,
/// so one instance can serve concurrent requests.
pub struct Predictor {
    config: ModelDirConfig,
    model: Box<dyn NccModel>,
    fields: Vec<(Box<dyn Tokenizer>, Vocabulary)>,
    index: Vec<IndexEntry>,
}

impl Predictor {
    pub fn load(dir: &Path, registry: &Registry) -> Result<Self, TaskError> {
        let config = read_model_dir_config(dir)?;
        let ckpt = load_checkpoint(&dir.join(&config.checkpoint), Some(&config.config_digest))?;
        let model = restore_model(&ckpt, registry)?;
        let fields = config
            .fields
            .iter()
            .map(|f| load_field_tokenizer(dir, f, registry))
            .collect::<Result<Vec<_>, _>>()?;
        let mut predictor = Self {
            config,
            model,
            fields,
            index: Vec::new(),
        };
        if let Some(nbow) = predictor.model.as_any().downcast_ref::<NbowEncoder>() {
            let index_file = predictor.config.index.as_ref().map(|f| dir.join(f));
            if let Some(path) = index_file.filter(|p| p.exists()) {
                let mut index = Vec::new();
                for line in read_index(&path)? {
                    let ids = predictor.encode_field(0, &line.code)?;
                    let vector = nbow.encode(&ids, Side::Code)?;
                    index.push(IndexEntry {
                        id: line.id,
                        code: line.code,
                        vector,
                    });
                }
                predictor.index = index;
            }
        }
        Ok(predictor)
    }

    pub fn config(&self) -> &ModelDirConfig {
        &self.config
    }

    pub fn task(&self) -> &str {
        &self.config.task
    }

    pub fn model(&self) -> &dyn NccModel {
        self.model.as_ref()
    }

    pub fn tokenizer(&self, field: usize) -> &dyn Tokenizer {
        self.fields[field].0.as_ref()
    }

    pub fn vocab(&self, field: usize) -> &Vocabulary {
        &self.fields[field].1
    }

    pub fn index(&self) -> &[IndexEntry] {
        &self.index
    }

    /// Tokenizes `text` with a field's tokenizer and maps it to ids.
    pub fn encode_field(&self, field: usize, text: &str) -> Result<Vec<u32>, TaskError> {
        let (tok, vocab) = &self.fields[field];
        let tokens = tok.tokenize(text).map_err(|e| TaskError::BadInput(e.to_string()))?;
        Ok(vocab.encode(&tokens))
    }

    /// Ids back to display text through a field's tokenizer.
    pub fn decode_field(&self, field: usize, ids: &[u32]) -> (String, Vec<String>) {
        let (tok, vocab) = &self.fields[field];
        let tokens = vocab.decode(ids);
        (tok.detokenize(&tokens), tokens)
    }

    /// Top-`k` next tokens after `tokens`; `<pad>` and `<bos>` are never
    /// proposed. Probabilities are the model's own.
    pub fn complete(&self, tokens: &[String], k: usize) -> Result<CompleteResponse, TaskError> {
        let lm = as_language_model(self.model())
            .ok_or_else(|| TaskError::BadInput(format!("model `{}` cannot complete code", self.model.kind())))?;
        if k == 0 {
            return Err(TaskError::BadInput("k must be at least 1".into()));
        }
        if tokens.is_empty() {
            return Err(TaskError::BadInput("empty prefix".into()));
        }
        let mut prefix = vec![BOS_ID];
        prefix.extend(self.encode_field(0, &tokens.join(" "))?);
        let dist = lm.next_distribution(&prefix);
        let mut ranked: Vec<(u32, f64)> = dist
            .iter()
            .enumerate()
            .map(|(i, &p)| (i as u32, p))
            .filter(|&(i, _)| i != PAD_ID && i != BOS_ID)
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let vocab = self.vocab(0);
        let candidates = ranked
            .into_iter()
            .take(k)
            .map(|(id, prob)| Candidate {
                token: vocab.token(id).unwrap_or_default().to_string(),
                prob,
            })
            .collect();
        Ok(CompleteResponse { candidates })
    }

    /// [`Predictor::complete`] on whitespace-split text.
    pub fn complete_text(&self, text: &str, k: usize) -> Result<CompleteResponse, TaskError> {
        self.complete(&space_tokenize(text), k)
    }

    pub fn summarize(&self, code: &str) -> Result<SummarizeResponse, TaskError> {
        let s2s = self
            .model
            .as_any()
            .downcast_ref::<Seq2Seq>()
            .ok_or_else(|| TaskError::BadInput(format!("model `{}` cannot summarize", self.model.kind())))?;
        let src = self.encode_field(0, code)?;
        if src.is_empty() {
            return Err(TaskError::BadInput("empty code".into()));
        }
        let out = s2s.greedy_decode(&src)?;
        let (summary, tokens) = self.decode_field(1, &out);
        Ok(SummarizeResponse { summary, tokens })
    }

    /// The `k` indexed snippets most similar to `query`.
    pub fn search(&self, query: &str, k: usize) -> Result<SearchResponse, TaskError> {
        let nbow = self
            .model
            .as_any()
            .downcast_ref::<NbowEncoder>()
            .ok_or_else(|| TaskError::BadInput(format!("model `{}` cannot search", self.model.kind())))?;
        if k == 0 {
            return Err(TaskError::BadInput("k must be at least 1".into()));
        }
        let ids = self.encode_field(1, query)?;
        if ids.is_empty() {
            return Err(TaskError::BadInput("empty query".into()));
        }
        let q = nbow.encode(&ids, Side::Query)?;
        let mut scored: Vec<(usize, f64)> = self
            .index
            .iter()
            .enumerate()
            .map(|(i, e)| (i, nbow.score(&q, &e.vector)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let results = scored
            .into_iter()
            .take(k)
            .map(|(i, score)| SearchHit {
                id: self.index[i].id.clone(),
                score,
                code: self.index[i].code.clone(),
            })
            .collect();
        Ok(SearchResponse { results })
    }
}
