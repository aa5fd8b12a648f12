//! Elman-cell recurrent language model trained with truncated BPTT.

use std::any::Any;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_ids, LanguageModel, ModelError, NccModel};
use crate::corpus::MiniBatch;
use crate::ncore::{
    affine, affine_backward, embed, embed_backward, rnn_step, rnn_step_backward, softmax,
    softmax_xent, Gradients, NcoreError, ParamSet, RnnCell, RnnCellGrads, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RnnLmConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Backpropagation window; hidden state is carried across windows
    /// without gradient.
    pub bptt_len: usize,
}

const EMBED: usize = 0;
const W_XH: usize = 1;
const W_HH: usize = 2;
const B_H: usize = 3;
const W_HY: usize = 4;
const B_Y: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct RnnLm {
    config: RnnLmConfig,
    params: ParamSet,
}

impl RnnLm {
    /// Weights uniform in `(-init_range, init_range)`, biases zero.
    pub fn new<R: Rng>(config: RnnLmConfig, init_range: f64, rng: &mut R) -> Result<Self, ModelError> {
        let RnnLmConfig {
            vocab_size: v,
            embed_dim: d,
            hidden_dim: h,
            bptt_len,
        } = config;
        if v == 0 || d == 0 || h == 0 || bptt_len == 0 {
            return Err(ModelError::InvalidConfig(format!("{config:?}")));
        }
        let mut params = ParamSet::new();
        params.push("embed", Tensor::uniform(&[v, d], init_range, rng))?;
        params.push("w_xh", Tensor::uniform(&[d, h], init_range, rng))?;
        params.push("w_hh", Tensor::uniform(&[h, h], init_range, rng))?;
        params.push("b_h", Tensor::zeros(&[h]))?;
        params.push("w_hy", Tensor::uniform(&[h, v], init_range, rng))?;
        params.push("b_y", Tensor::zeros(&[v]))?;
        Ok(Self { config, params })
    }

    /// Wraps existing parameters, checking their shapes against `config`.
    pub fn from_params(config: RnnLmConfig, params: ParamSet) -> Result<Self, ModelError> {
        let mut rng = super::seeded_rng(0);
        let template = Self::new(config, 0.0, &mut rng)?;
        for (a, b) in template.params.iter().zip(params.iter()) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(ModelError::BadState(b.name.clone()));
            }
        }
        if template.params.len() != params.len() {
            return Err(ModelError::BadState("parameter count".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> RnnLmConfig {
        self.config
    }

    fn cell(&self) -> RnnCell<'_> {
        RnnCell {
            w_xh: self.params.value(W_XH),
            w_hh: self.params.value(W_HH),
            b_h: self.params.value(B_H),
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.config.hidden_dim]
    }

    pub fn step(&self, id: u32, h_prev: &[f64]) -> Result<Vec<f64>, NcoreError> {
        let x = embed(self.params.value(EMBED), id)?;
        rnn_step(x, h_prev, self.cell())
    }

    pub fn logits(&self, h: &[f64]) -> Result<Vec<f64>, NcoreError> {
        affine(self.params.value(W_HY), self.params.value(B_Y), h)
    }

    /// Summed cross-entropy of `targets[t]` given `inputs[..=t]`, with the
    /// gradient of that sum added into `grads`. Returns `(loss_sum, count)`.
    pub fn sequence_loss_grad(
        &self,
        inputs: &[u32],
        targets: &[u32],
        grads: &mut Gradients,
    ) -> Result<(f64, usize), ModelError> {
        if inputs.len() != targets.len() {
            return Err(NcoreError::ShapeMismatch {
                what: "rnnlm targets",
                expected: vec![inputs.len()],
                actual: vec![targets.len()],
            }
            .into());
        }
        check_ids(inputs, self.config.vocab_size)?;
        let [g_embed, g_wxh, g_whh, g_bh, g_why, g_by] = grads.0.as_mut_slice() else {
            return Err(ModelError::BadState("gradient layout".into()));
        };
        let embed_table = self.params.value(EMBED);
        let (w_hy, b_y) = (self.params.value(W_HY), self.params.value(B_Y));
        let cell = self.cell();

        let mut loss = 0.0;
        let mut h_carry = self.initial_state();
        let window = self.config.bptt_len;
        for start in (0..inputs.len()).step_by(window) {
            let end = (start + window).min(inputs.len());
            let mut hs = vec![h_carry];
            for &id in &inputs[start..end] {
                let h = rnn_step(embed(embed_table, id)?, hs.last().unwrap(), cell)?;
                hs.push(h);
            }
            let mut dhs = Vec::with_capacity(end - start);
            for (t, &target) in targets[start..end].iter().enumerate() {
                let logits = affine(w_hy, b_y, &hs[t + 1])?;
                let (l, dlogits) = softmax_xent(&logits, target)?;
                loss += l;
                dhs.push(affine_backward(w_hy, &hs[t + 1], &dlogits, &mut *g_why, &mut *g_by));
            }
            let mut cell_grads = RnnCellGrads {
                w_xh: &mut *g_wxh,
                w_hh: &mut *g_whh,
                b_h: &mut *g_bh,
            };
            let mut dh_next = vec![0.0; self.config.hidden_dim];
            for t in (0..end - start).rev() {
                let dh: Vec<f64> = dhs[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                let id = inputs[start + t];
                let x = embed(embed_table, id)?;
                let (dx, dh_prev) = rnn_step_backward(x, &hs[t], &hs[t + 1], &dh, cell, &mut cell_grads);
                embed_backward(&mut *g_embed, id, &dx);
                dh_next = dh_prev;
            }
            h_carry = hs.pop().unwrap();
        }
        Ok((loss, inputs.len()))
    }

    /// Mean cross-entropy over the non-pad target positions of `batch` and its
    /// gradient.
    pub fn loss(&self, batch: &MiniBatch) -> Result<(f64, Gradients), ModelError> {
        let targets = batch.targets.as_ref().ok_or(ModelError::InvalidConfig(
            "language-model batch needs targets".into(),
        ))?;
        let mut grads = self.params.zero_grads();
        let (mut sum, mut count) = (0.0, 0);
        for ((ids, tgt), &len) in batch.ids.iter().zip(targets).zip(&batch.lengths) {
            let (l, n) = self.sequence_loss_grad(&ids[..len], &tgt[..len], &mut grads)?;
            sum += l;
            count += n;
        }
        if count == 0 {
            return Err(ModelError::EmptyInput);
        }
        grads.scale(1.0 / count as f64);
        Ok((sum / count as f64, grads))
    }
}

impl LanguageModel for RnnLm {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn next_distribution(&self, prefix: &[u32]) -> Vec<f64> {
        let mut h = self.initial_state();
        for &id in prefix {
            let id = if (id as usize) < self.config.vocab_size { id } else { crate::corpus::UNK_ID };
            h = self.step(id, &h).expect("shapes fixed at construction");
        }
        softmax(&self.logits(&h).expect("shapes fixed at construction"))
    }

    fn sequence_log_probs(&self, seq: &[u32]) -> Vec<f64> {
        let mut h = self.initial_state();
        let mut out = Vec::with_capacity(seq.len().saturating_sub(1));
        for t in 1..seq.len() {
            h = self.step(seq[t - 1], &h).expect("ids checked by caller");
            let logits = self.logits(&h).expect("shapes fixed at construction");
            out.push(crate::ncore::log_softmax(&logits)[seq[t] as usize]);
        }
        out
    }

    fn prefix_distributions(&self, seq: &[u32]) -> Vec<Vec<f64>> {
        let mut h = self.initial_state();
        let mut out = Vec::with_capacity(seq.len().saturating_sub(1));
        for t in 1..seq.len() {
            let id = if (seq[t - 1] as usize) < self.config.vocab_size { seq[t - 1] } else { crate::corpus::UNK_ID };
            h = self.step(id, &h).expect("shapes fixed at construction");
            out.push(softmax(&self.logits(&h).expect("shapes fixed at construction")));
        }
        out
    }
}

impl NccModel for RnnLm {
    fn kind(&self) -> &'static str {
        "seqrnn"
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
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
    use crate::models::{lm_topk, seeded_rng};
    use crate::ncore::{grad_check, Subset};

    fn cfg(v: usize, bptt: usize) -> RnnLmConfig {
        RnnLmConfig {
            vocab_size: v,
            embed_dim: 3,
            hidden_dim: 4,
            bptt_len: bptt,
        }
    }

    #[test]
    fn untrained_loss_is_near_ln_v() {
        let m = RnnLm::new(cfg(50, 8), 0.08, &mut seeded_rng(1)).unwrap();
        let batch = MiniBatch::for_language_model(&[vec![2, 10, 11, 12, 13, 3], vec![2, 40, 41, 3]]).unwrap();
        let (loss, _) = m.loss(&batch).unwrap();
        let ln_v = (50f64).ln();
        assert!((loss - ln_v).abs() / ln_v < 0.15, "loss {loss} vs ln V {ln_v}");
    }

    #[test]
    fn gradient_check_toy_batch() {
        // Windows must cover the longest row (4 inputs) for the exact gradient.
        for bptt in [4, 8] {
            let m = RnnLm::new(cfg(7, bptt), 0.5, &mut seeded_rng(3)).unwrap();
            let batch = MiniBatch::for_language_model(&[vec![2, 4, 5, 6, 3], vec![2, 5, 3]]).unwrap();
            let (_, grads) = m.loss(&batch).unwrap();
            let report = grad_check(
                |p| RnnLm::from_params(m.config, p.clone()).unwrap().loss(&batch).unwrap().0,
                m.params(),
                &grads,
                1e-5,
                Subset::All,
            );
            assert!(report.max_rel_err < 1e-4, "bptt {bptt}: {report:?}");
        }
    }

    #[test]
    fn truncation_only_drops_cross_window_terms() {
        let batch = MiniBatch::for_language_model(&[vec![2, 4, 5, 6, 3]]).unwrap();
        let full = RnnLm::new(cfg(7, 8), 0.5, &mut seeded_rng(3)).unwrap();
        let short = RnnLm::from_params(cfg(7, 2), full.params().clone()).unwrap();
        let (lf, gf) = full.loss(&batch).unwrap();
        let (ls, gs) = short.loss(&batch).unwrap();
        // Forward pass carries state across windows, so losses agree exactly.
        assert_eq!(lf, ls);
        // Output-layer gradients do not flow through time.
        assert_eq!(gf.0[W_HY], gs.0[W_HY]);
        assert_eq!(gf.0[B_Y], gs.0[B_Y]);
        assert_ne!(gf.0[W_HH], gs.0[W_HH]);
    }

    #[test]
    fn unused_embedding_rows_have_zero_grad() {
        let m = RnnLm::new(cfg(9, 8), 0.3, &mut seeded_rng(5)).unwrap();
        let batch = MiniBatch::for_language_model(&[vec![2, 4, 3]]).unwrap();
        let (_, grads) = m.loss(&batch).unwrap();
        for row in [0, 1, 5, 6, 7, 8] {
            assert!(grads.0[EMBED].row(row).iter().all(|&g| g == 0.0), "row {row}");
        }
        assert!(grads.0[EMBED].row(4).iter().any(|&g| g != 0.0));
    }

    #[test]
    fn masked_batch_equals_single_position() {
        let m = RnnLm::new(cfg(8, 4), 0.3, &mut seeded_rng(9)).unwrap();
        let batch = MiniBatch {
            ids: vec![vec![2, 0, 0], vec![0, 0, 0]],
            lengths: vec![1, 0],
            targets: Some(vec![vec![5, 0, 0], vec![0, 0, 0]]),
        };
        let (loss, _) = m.loss(&batch).unwrap();
        let h = m.step(2, &m.initial_state()).unwrap();
        let (single, _) = softmax_xent(&m.logits(&h).unwrap(), 5).unwrap();
        assert_eq!(loss, single);
    }

    #[test]
    fn zero_model_is_uniform() {
        let mut m = RnnLm::new(cfg(6, 4), 0.3, &mut seeded_rng(2)).unwrap();
        m.params_mut().iter_mut().for_each(|p| p.value.fill(0.0));
        let top = lm_topk(&m, &[2, 4], 3);
        assert_eq!(top.iter().map(|t| t.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(top.iter().all(|t| (t.1 - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn log_probs_match_distribution_path() {
        let m = RnnLm::new(cfg(8, 4), 0.3, &mut seeded_rng(4)).unwrap();
        let seq = [2, 5, 6, 7, 3];
        let fast = m.sequence_log_probs(&seq);
        for t in 1..seq.len() {
            let slow = m.next_distribution(&seq[..t])[seq[t] as usize].ln();
            assert!((fast[t - 1] - slow).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_and_range_errors() {
        let m = RnnLm::new(cfg(5, 4), 0.1, &mut seeded_rng(0)).unwrap();
        let mut g = m.params().zero_grads();
        assert!(matches!(
            m.sequence_loss_grad(&[1, 2], &[2], &mut g),
            Err(ModelError::Numeric(NcoreError::ShapeMismatch { .. }))
        ));
        assert!(matches!(
            m.sequence_loss_grad(&[9], &[2], &mut g),
            Err(ModelError::TokenOutOfRange { id: 9, vocab: 5 })
        ));
    }
}
