//! Count-based n-gram language model with Jelinek-Mercer interpolation down
//! to a uniform floor.

use std::any::Any;
use std::collections::HashMap;

use super::{check_ids, LanguageModel, ModelError, NccModel};
use crate::ncore::{ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    lambda: f64,
    vocab_size: usize,
    /// `counts[k][context][token]` for contexts of length `k`.
    counts: Vec<HashMap<Vec<u32>, HashMap<u32, u64>>>,
    /// `totals[k][context] = Σ_w counts[k][context][w]`.
    totals: Vec<HashMap<Vec<u32>, u64>>,
    no_params: ParamSet,
}

impl NgramModel {
    pub fn new(order: usize, lambda: f64, vocab_size: usize) -> Result<Self, ModelError> {
        if order == 0 {
            return Err(ModelError::InvalidConfig("n-gram order must be at least 1".into()));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(ModelError::InvalidConfig(format!("lambda {lambda} outside (0, 1]")));
        }
        if vocab_size == 0 {
            return Err(ModelError::InvalidConfig("empty vocabulary".into()));
        }
        Ok(Self {
            order,
            lambda,
            vocab_size,
            counts: vec![HashMap::new(); order],
            totals: vec![HashMap::new(); order],
            no_params: ParamSet::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Adds every k-gram (k ≤ order) of `seq`.
    pub fn observe(&mut self, seq: &[u32]) -> Result<(), ModelError> {
        check_ids(seq, self.vocab_size)?;
        for t in 0..seq.len() {
            for k in 0..self.order.min(t + 1) {
                let context = seq[t - k..t].to_vec();
                *self.counts[k]
                    .entry(context.clone())
                    .or_default()
                    .entry(seq[t])
                    .or_insert(0) += 1;
                *self.totals[k].entry(context).or_insert(0) += 1;
            }
        }
        Ok(())
    }

    pub fn count(&self, context: &[u32], token: u32) -> u64 {
        self.counts
            .get(context.len())
            .and_then(|m| m.get(context))
            .and_then(|m| m.get(&token))
            .copied()
            .unwrap_or(0)
    }

    pub fn context_total(&self, context: &[u32]) -> u64 {
        self.totals
            .get(context.len())
            .and_then(|m| m.get(context))
            .copied()
            .unwrap_or(0)
    }

    /// Interpolated distribution; the context is truncated to its last
    /// `order - 1` ids and unseen contexts fall through to lower orders.
    pub fn next_dist(&self, context: &[u32]) -> Vec<f64> {
        let v = self.vocab_size;
        let mut dist = vec![1.0 / v as f64; v];
        for k in 0..self.order {
            if k > context.len() {
                break;
            }
            let ctx = &context[context.len() - k..];
            let Some(followers) = self.counts[k].get(ctx) else {
                continue;
            };
            let total = self.totals[k][ctx] as f64;
            for p in dist.iter_mut() {
                *p *= 1.0 - self.lambda;
            }
            for (&w, &c) in followers {
                dist[w as usize] += self.lambda * c as f64 / total;
            }
        }
        dist
    }

    fn tensor_name(k: usize) -> String {
        format!("ngram.counts.{k}")
    }
}

/// Counts all k-grams (k ≤ `order`) of `sequences`.
pub fn ngram_train(
    sequences: &[Vec<u32>],
    order: usize,
    lambda: f64,
    vocab_size: usize,
) -> Result<NgramModel, ModelError> {
    if sequences.iter().all(Vec::is_empty) {
        return Err(ModelError::EmptyCorpus);
    }
    let mut model = NgramModel::new(order, lambda, vocab_size)?;
    for seq in sequences {
        model.observe(seq)?;
    }
    Ok(model)
}

impl LanguageModel for NgramModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_distribution(&self, prefix: &[u32]) -> Vec<f64> {
        let keep = prefix.len().min(self.order - 1);
        self.next_dist(&prefix[prefix.len() - keep..])
    }
}

impl NccModel for NgramModel {
    fn kind(&self) -> &'static str {
        "ngram"
    }

    fn params(&self) -> &ParamSet {
        &self.no_params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.no_params
    }

    /// One `[entries, k + 2]` tensor per context length `k`: the context ids,
    /// the token id and the count, sorted by (context, token).
    fn state_tensors(&self) -> Vec<(String, Tensor)> {
        (0..self.order)
            .map(|k| {
                let mut rows: Vec<(&Vec<u32>, u32, u64)> = self.counts[k]
                    .iter()
                    .flat_map(|(ctx, m)| m.iter().map(move |(&w, &c)| (ctx, w, c)))
                    .collect();
                rows.sort();
                let data: Vec<f64> = rows
                    .iter()
                    .flat_map(|(ctx, w, c)| {
                        ctx.iter()
                            .map(|&i| f64::from(i))
                            .chain([f64::from(*w), *c as f64])
                    })
                    .collect();
                let t = Tensor::from_vec(&[rows.len(), k + 2], data).expect("row width");
                (Self::tensor_name(k), t)
            })
            .collect()
    }

    fn load_state_tensors(&mut self, tensors: Vec<(String, Tensor)>) -> Result<(), ModelError> {
        let mut fresh = Self::new(self.order, self.lambda, self.vocab_size)?;
        let mut seen = 0;
        for (name, t) in tensors {
            let k = (0..self.order)
                .find(|&k| Self::tensor_name(k) == name)
                .ok_or_else(|| ModelError::BadState(name.clone()))?;
            if t.shape().len() != 2 || (t.rows() > 0 && t.cols() != k + 2) {
                return Err(ModelError::BadState(name));
            }
            for r in 0..t.rows() {
                let row = t.row(r);
                let ctx: Vec<u32> = row[..k].iter().map(|&v| v as u32).collect();
                let (w, c) = (row[k] as u32, row[k + 1] as u64);
                check_ids(&ctx, self.vocab_size)?;
                check_ids(&[w], self.vocab_size)?;
                *fresh.counts[k].entry(ctx.clone()).or_default().entry(w).or_insert(0) += c;
                *fresh.totals[k].entry(ctx).or_insert(0) += c;
            }
            seen += 1;
        }
        if seen != self.order {
            return Err(ModelError::BadState("ngram.counts".into()));
        }
        *self = fresh;
        Ok(())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::lm_topk;

    // a=0, b=1, c=2
    fn abab() -> Vec<Vec<u32>> {
        vec![vec![0, 1, 0, 1, 0, 2]]
    }

    #[test]
    fn bigram_counts() {
        let m = ngram_train(&abab(), 2, 0.7, 3).unwrap();
        assert_eq!(m.count(&[0], 1), 2);
        assert_eq!(m.count(&[0], 2), 1);
        assert_eq!(m.context_total(&[0]), 3);
        assert_eq!(m.context_total(&[]), 6);
    }

    #[test]
    fn interpolated_bigram_probability() {
        let m = ngram_train(&abab(), 2, 0.7, 3).unwrap();
        let d = m.next_distribution(&[0]);
        let expected = 0.7 * (2.0 / 3.0) + 0.3 * (0.7 * (2.0 / 6.0) + 0.3 / 3.0);
        assert!((d[1] - expected).abs() < 1e-12);
        assert!((d[1] - 0.566_666_666_666_666_7).abs() < 1e-12);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unseen_context_falls_back_to_unigram() {
        let m = ngram_train(&abab(), 2, 0.7, 3).unwrap();
        assert_eq!(m.next_distribution(&[2]), m.next_distribution(&[]));
    }

    #[test]
    fn lambda_one_gives_mle() {
        let m = ngram_train(&abab(), 2, 1.0, 3).unwrap();
        let d = m.next_distribution(&[0]);
        assert_eq!(d, vec![0.0, 2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn unigram_model_ignores_context() {
        let m = ngram_train(&abab(), 1, 1.0, 3).unwrap();
        assert_eq!(m.next_distribution(&[0, 1]), vec![3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0]);
    }

    #[test]
    fn duplicated_corpus_doubles_counts() {
        let one = ngram_train(&abab(), 3, 0.7, 3).unwrap();
        let two = ngram_train(&[abab(), abab()].concat(), 3, 0.7, 3).unwrap();
        for (k, level) in one.counts.iter().enumerate() {
            for (ctx, m) in level {
                for (w, c) in m {
                    assert_eq!(two.counts[k][ctx][w], 2 * c);
                }
            }
        }
    }

    #[test]
    fn empty_corpus_and_bad_ids() {
        assert_eq!(ngram_train(&[vec![]], 2, 0.7, 3), Err(ModelError::EmptyCorpus));
        assert_eq!(
            ngram_train(&[vec![0, 5]], 2, 0.7, 3),
            Err(ModelError::TokenOutOfRange { id: 5, vocab: 3 })
        );
        assert!(NgramModel::new(0, 0.7, 3).is_err());
        assert!(NgramModel::new(2, 0.0, 3).is_err());
    }

    #[test]
    fn topk_on_bigram() {
        let m = ngram_train(&abab(), 2, 0.7, 3).unwrap();
        let top = lm_topk(&m, &[0], 1);
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].0, 1);
        assert!((top[0].1 - 0.566_666_666_666_666_7).abs() < 1e-12);
        let all = lm_topk(&m, &[0], 10);
        assert_eq!(all.len(), 3);
        assert!(all.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn state_round_trip() {
        let m = ngram_train(&[vec![0, 1, 2, 1, 0], vec![2, 2, 1]], 3, 0.6, 4).unwrap();
        let mut restored = NgramModel::new(3, 0.6, 4).unwrap();
        restored.load_state_tensors(m.state_tensors()).unwrap();
        assert_eq!(restored.counts, m.counts);
        assert_eq!(restored.totals, m.totals);
    }
}
