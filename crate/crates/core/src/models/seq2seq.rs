//! Encoder-decoder with Elman cells: the decoder starts from the encoder's
//! final hidden state and is trained with teacher forcing.

use std::any::Any;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, check_ids, ModelError, NccModel};
use crate::corpus::{BOS_ID, EOS_ID};
use crate::ncore::{
    affine, affine_backward, embed, embed_backward, rnn_step, rnn_step_backward, softmax_xent,
    Gradients, NcoreError, ParamSet, RnnCell, RnnCellGrads, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seq2SeqConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_decode_len: usize,
    /// Encoder reads the source right-to-left.
    pub reverse_source: bool,
}

const ENC_EMBED: usize = 0;
// Cell parameters are stored as consecutive (w_xh, w_hh, b_h) triples.
const ENC_W_XH: usize = 1;
const DEC_EMBED: usize = 4;
const DEC_W_XH: usize = 5;
const W_HY: usize = 8;
const B_Y: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Seq {
    config: Seq2SeqConfig,
    params: ParamSet,
}

impl Seq2Seq {
    pub fn new<R: Rng>(config: Seq2SeqConfig, init_range: f64, rng: &mut R) -> Result<Self, ModelError> {
        let Seq2SeqConfig {
            src_vocab: vs,
            tgt_vocab: vt,
            embed_dim: d,
            hidden_dim: h,
            ..
        } = config;
        if vs == 0 || vt == 0 || d == 0 || h == 0 {
            return Err(ModelError::InvalidConfig(format!("{config:?}")));
        }
        let mut p = ParamSet::new();
        p.push("enc.embed", Tensor::uniform(&[vs, d], init_range, rng))?;
        p.push("enc.w_xh", Tensor::uniform(&[d, h], init_range, rng))?;
        p.push("enc.w_hh", Tensor::uniform(&[h, h], init_range, rng))?;
        p.push("enc.b_h", Tensor::zeros(&[h]))?;
        p.push("dec.embed", Tensor::uniform(&[vt, d], init_range, rng))?;
        p.push("dec.w_xh", Tensor::uniform(&[d, h], init_range, rng))?;
        p.push("dec.w_hh", Tensor::uniform(&[h, h], init_range, rng))?;
        p.push("dec.b_h", Tensor::zeros(&[h]))?;
        p.push("dec.w_hy", Tensor::uniform(&[h, vt], init_range, rng))?;
        p.push("dec.b_y", Tensor::zeros(&[vt]))?;
        Ok(Self { config, params: p })
    }

    pub fn from_params(config: Seq2SeqConfig, params: ParamSet) -> Result<Self, ModelError> {
        let template = Self::new(config, 0.0, &mut super::seeded_rng(0))?;
        let same = template.params.len() == params.len()
            && template
                .params
                .iter()
                .zip(params.iter())
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape());
        if !same {
            return Err(ModelError::BadState("seq2seq parameter shapes".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> Seq2SeqConfig {
        self.config
    }

    pub fn set_max_decode_len(&mut self, len: usize) {
        self.config.max_decode_len = len;
    }

    fn cell(&self, w_xh: usize) -> RnnCell<'_> {
        RnnCell {
            w_xh: self.params.value(w_xh),
            w_hh: self.params.value(w_xh + 1),
            b_h: self.params.value(w_xh + 2),
        }
    }

    fn source_order(&self, src: &[u32]) -> Vec<u32> {
        if self.config.reverse_source {
            src.iter().rev().copied().collect()
        } else {
            src.to_vec()
        }
    }

    /// Encoder hidden states, `states[0]` being the zero initial state.
    fn encode_states(&self, src: &[u32]) -> Result<Vec<Vec<f64>>, ModelError> {
        let table = self.params.value(ENC_EMBED);
        let cell = self.cell(ENC_W_XH);
        let mut states = vec![vec![0.0; self.config.hidden_dim]];
        for &id in src {
            let h = rnn_step(embed(table, id)?, states.last().unwrap(), cell)?;
            states.push(h);
        }
        Ok(states)
    }

    /// Summed teacher-forced cross-entropy of `tgt[1..]` (which must be wrapped
    /// in `<bos>` ... `<eos>`); adds the gradient of the sum into `grads`.
    pub fn pair_loss_grad(&self, src: &[u32], tgt: &[u32], grads: &mut Gradients) -> Result<(f64, usize), ModelError> {
        if src.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        if tgt.len() < 2 {
            return Err(NcoreError::ShapeMismatch {
                what: "seq2seq target (needs <bos> ... <eos>)",
                expected: vec![2],
                actual: vec![tgt.len()],
            }
            .into());
        }
        check_ids(src, self.config.src_vocab)?;
        check_ids(tgt, self.config.tgt_vocab)?;
        let src = self.source_order(src);
        let [g_enc_embed, g_enc_xh, g_enc_hh, g_enc_b, g_dec_embed, g_dec_xh, g_dec_hh, g_dec_b, g_why, g_by] =
            grads.0.as_mut_slice()
        else {
            return Err(ModelError::BadState("gradient layout".into()));
        };

        let enc_states = self.encode_states(&src)?;
        let dec_table = self.params.value(DEC_EMBED);
        let dec_cell = self.cell(DEC_W_XH);
        let (w_hy, b_y) = (self.params.value(W_HY), self.params.value(B_Y));

        let inputs = &tgt[..tgt.len() - 1];
        let targets = &tgt[1..];
        let mut dec_states = vec![enc_states.last().unwrap().clone()];
        for &id in inputs {
            let h = rnn_step(embed(dec_table, id)?, dec_states.last().unwrap(), dec_cell)?;
            dec_states.push(h);
        }
        let mut loss = 0.0;
        let mut d_out = Vec::with_capacity(targets.len());
        for (t, &target) in targets.iter().enumerate() {
            let logits = affine(w_hy, b_y, &dec_states[t + 1])?;
            let (l, dlogits) = softmax_xent(&logits, target)?;
            loss += l;
            d_out.push(affine_backward(w_hy, &dec_states[t + 1], &dlogits, g_why, g_by));
        }

        let mut dec_grads = RnnCellGrads {
            w_xh: g_dec_xh,
            w_hh: g_dec_hh,
            b_h: g_dec_b,
        };
        let mut dh_next = vec![0.0; self.config.hidden_dim];
        for t in (0..inputs.len()).rev() {
            let dh: Vec<f64> = d_out[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let x = embed(dec_table, inputs[t])?;
            let (dx, dh_prev) =
                rnn_step_backward(x, &dec_states[t], &dec_states[t + 1], &dh, dec_cell, &mut dec_grads);
            embed_backward(g_dec_embed, inputs[t], &dx);
            dh_next = dh_prev;
        }

        let enc_table = self.params.value(ENC_EMBED);
        let enc_cell = self.cell(ENC_W_XH);
        let mut enc_grads = RnnCellGrads {
            w_xh: g_enc_xh,
            w_hh: g_enc_hh,
            b_h: g_enc_b,
        };
        for t in (0..src.len()).rev() {
            let x = embed(enc_table, src[t])?;
            let (dx, dh_prev) =
                rnn_step_backward(x, &enc_states[t], &enc_states[t + 1], &dh_next, enc_cell, &mut enc_grads);
            embed_backward(g_enc_embed, src[t], &dx);
            dh_next = dh_prev;
        }
        Ok((loss, targets.len()))
    }

    /// Mean cross-entropy over target positions and its gradient.
    pub fn loss(&self, src: &[u32], tgt: &[u32]) -> Result<(f64, Gradients), ModelError> {
        let mut grads = self.params.zero_grads();
        let (sum, n) = self.pair_loss_grad(src, tgt, &mut grads)?;
        grads.scale(1.0 / n as f64);
        Ok((sum / n as f64, grads))
    }

    /// Greedy decoding from `<bos>` until `<eos>` or `max_decode_len` tokens;
    /// the result excludes `<bos>`/`<eos>`.
    pub fn greedy_decode(&self, src: &[u32]) -> Result<Vec<u32>, ModelError> {
        check_ids(src, self.config.src_vocab)?;
        let src = self.source_order(src);
        let mut h = self.encode_states(&src)?.pop().unwrap();
        let table = self.params.value(DEC_EMBED);
        let cell = self.cell(DEC_W_XH);
        let mut prev = BOS_ID;
        let mut out = Vec::new();
        while out.len() < self.config.max_decode_len {
            h = rnn_step(embed(table, prev)?, &h, cell)?;
            let logits = affine(self.params.value(W_HY), self.params.value(B_Y), &h)?;
            let next = argmax(&logits) as u32;
            if next == EOS_ID {
                break;
            }
            out.push(next);
            prev = next;
        }
        Ok(out)
    }
}

impl NccModel for Seq2Seq {
    fn kind(&self) -> &'static str {
        "seq2seq"
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
    use crate::models::seeded_rng;
    use crate::ncore::{grad_check, Subset};

    fn cfg(reverse: bool) -> Seq2SeqConfig {
        Seq2SeqConfig {
            src_vocab: 9,
            tgt_vocab: 8,
            embed_dim: 3,
            hidden_dim: 4,
            max_decode_len: 6,
            reverse_source: reverse,
        }
    }

    #[test]
    fn untrained_loss_near_ln_v() {
        let c = Seq2SeqConfig {
            src_vocab: 40,
            tgt_vocab: 40,
            embed_dim: 8,
            hidden_dim: 16,
            max_decode_len: 10,
            reverse_source: false,
        };
        let m = Seq2Seq::new(c, 0.08, &mut seeded_rng(1)).unwrap();
        let (loss, _) = m.loss(&[5, 6, 7], &[BOS_ID, 9, 10, 11, EOS_ID]).unwrap();
        let ln_v = (40f64).ln();
        assert!((loss - ln_v).abs() / ln_v < 0.15);
    }

    #[test]
    fn gradient_check() {
        for reverse in [false, true] {
            let m = Seq2Seq::new(cfg(reverse), 0.5, &mut seeded_rng(2)).unwrap();
            let (src, tgt) = ([4, 5, 8], [BOS_ID, 6, EOS_ID]);
            let (_, grads) = m.loss(&src, &tgt).unwrap();
            let report = grad_check(
                |p| Seq2Seq::from_params(m.config, p.clone()).unwrap().loss(&src, &tgt).unwrap().0,
                m.params(),
                &grads,
                1e-5,
                Subset::All,
            );
            assert!(report.max_rel_err < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn empty_source_is_rejected() {
        let m = Seq2Seq::new(cfg(false), 0.1, &mut seeded_rng(0)).unwrap();
        assert_eq!(m.loss(&[], &[BOS_ID, EOS_ID]).unwrap_err(), ModelError::EmptyInput);
    }

    #[test]
    fn decode_cap_and_determinism() {
        let mut m = Seq2Seq::new(cfg(false), 0.3, &mut seeded_rng(7)).unwrap();
        let a = m.greedy_decode(&[4, 5]).unwrap();
        assert_eq!(a, m.greedy_decode(&[4, 5]).unwrap());
        assert!(a.len() <= 6);
        m.set_max_decode_len(0);
        assert!(m.greedy_decode(&[4, 5]).unwrap().is_empty());
    }
}
