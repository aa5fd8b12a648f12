use crate::corpus::{BOS_ID, EOS_ID};
use crate::models::{as_language_model, ModelError, NbowEncoder, NccModel, NgramModel, RnnLm, Seq2Seq};
use crate::ncore::Gradients;
use crate::trainer::Objective;

fn wrong_model(expected: &str, model: &dyn NccModel) -> ModelError {
    ModelError::InvalidConfig(format!("objective needs a {expected} model, got `{}`", model.kind()))
}

/// Wraps ids as `<bos> ids <eos>`.
pub(crate) fn wrap(ids: &[u32]) -> Vec<u32> {
    let mut v = Vec::with_capacity(ids.len() + 2);
    v.push(BOS_ID);
    v.extend_from_slice(ids);
    v.push(EOS_ID);
    v
}

fn mean_nll(model: &dyn NccModel, seqs: &[Vec<u32>]) -> Option<f64> {
    let lm = as_language_model(model)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for s in seqs {
        for lp in lm.sequence_log_probs(s) {
            sum -= lp;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Next-token prediction. Every sequence (already wrapped in `<bos>` …
/// `<eos>` where wanted) is one work unit weighted by its target count.
pub struct LmObjective {
    train: Vec<Vec<u32>>,
    valid: Vec<Vec<u32>>,
}

impl LmObjective {
    pub fn new(train: Vec<Vec<u32>>, valid: Vec<Vec<u32>>) -> Self {
        Self { train, valid }
    }
}

impl Objective for LmObjective {
    fn num_samples(&self) -> usize {
        self.train.len()
    }

    fn unit_loss_grad(&self, model: &dyn NccModel, unit: &[usize], grads: &mut Gradients) -> Result<(f64, f64), ModelError> {
        let rnn = model
            .as_any()
            .downcast_ref::<RnnLm>()
            .ok_or_else(|| wrong_model("seqrnn", model))?;
        let (mut loss, mut weight) = (0.0, 0.0);
        for &i in unit {
            let seq = &self.train[i];
            if seq.len() < 2 {
                continue;
            }
            let (l, n) = rnn.sequence_loss_grad(&seq[..seq.len() - 1], &seq[1..], grads)?;
            loss += l;
            weight += n as f64;
        }
        Ok((loss, weight))
    }

    fn valid_loss(&self, model: &dyn NccModel) -> Result<Option<f64>, ModelError> {
        Ok(mean_nll(model, &self.valid))
    }

    fn fit(&self, model: &mut dyn NccModel) -> Result<bool, ModelError> {
        let Some(ngram) = model.as_any_mut().downcast_mut::<NgramModel>() else {
            return Ok(false);
        };
        for seq in &self.train {
            ngram.observe(seq)?;
        }
        Ok(true)
    }
}

/// Teacher-forced comment generation; every `(source, <bos> target <eos>)`
/// pair is one work unit.
pub struct Seq2SeqObjective {
    train: Vec<(Vec<u32>, Vec<u32>)>,
    valid: Vec<(Vec<u32>, Vec<u32>)>,
}

impl Seq2SeqObjective {
    pub fn new(train: Vec<(Vec<u32>, Vec<u32>)>, valid: Vec<(Vec<u32>, Vec<u32>)>) -> Self {
        Self { train, valid }
    }
}

impl Objective for Seq2SeqObjective {
    fn num_samples(&self) -> usize {
        self.train.len()
    }

    fn unit_loss_grad(&self, model: &dyn NccModel, unit: &[usize], grads: &mut Gradients) -> Result<(f64, f64), ModelError> {
        let s2s = model
            .as_any()
            .downcast_ref::<Seq2Seq>()
            .ok_or_else(|| wrong_model("seq2seq", model))?;
        let (mut loss, mut weight) = (0.0, 0.0);
        for &i in unit {
            let (src, tgt) = &self.train[i];
            let (l, n) = s2s.pair_loss_grad(src, tgt, grads)?;
            loss += l;
            weight += n as f64;
        }
        Ok((loss, weight))
    }

    fn valid_loss(&self, model: &dyn NccModel) -> Result<Option<f64>, ModelError> {
        let Some(s2s) = model.as_any().downcast_ref::<Seq2Seq>() else {
            return Ok(None);
        };
        if self.valid.is_empty() {
            return Ok(None);
        }
        let mut scratch = s2s.params().zero_grads();
        let (mut sum, mut n) = (0.0, 0usize);
        for (src, tgt) in &self.valid {
            let (l, k) = s2s.pair_loss_grad(src, tgt, &mut scratch)?;
            sum += l;
            n += k;
        }
        Ok(Some(sum / n as f64))
    }
}

/// In-batch softmax retrieval. The loss couples all pairs of a batch, so a
/// batch is a single work unit; a trailing batch of one pair has no
/// negatives and is skipped.
pub struct RetrievalObjective {
    /// `(code, query)` pairs.
    train: Vec<(Vec<u32>, Vec<u32>)>,
    valid: Vec<(Vec<u32>, Vec<u32>)>,
    valid_batch: usize,
}

impl RetrievalObjective {
    pub fn new(train: Vec<(Vec<u32>, Vec<u32>)>, valid: Vec<(Vec<u32>, Vec<u32>)>) -> Self {
        Self {
            train,
            valid,
            valid_batch: 32,
        }
    }
}

impl Objective for RetrievalObjective {
    fn num_samples(&self) -> usize {
        self.train.len()
    }

    fn work_units(&self, batch: &[usize]) -> Vec<Vec<usize>> {
        if batch.len() < 2 {
            Vec::new()
        } else {
            vec![batch.to_vec()]
        }
    }

    fn unit_loss_grad(&self, model: &dyn NccModel, unit: &[usize], grads: &mut Gradients) -> Result<(f64, f64), ModelError> {
        let nbow = model
            .as_any()
            .downcast_ref::<NbowEncoder>()
            .ok_or_else(|| wrong_model("nbow", model))?;
        let pairs: Vec<(Vec<u32>, Vec<u32>)> = unit.iter().map(|&i| self.train[i].clone()).collect();
        let (loss, n) = nbow.batch_loss_grad(&pairs, grads)?;
        Ok((loss, n as f64))
    }

    fn valid_loss(&self, model: &dyn NccModel) -> Result<Option<f64>, ModelError> {
        let Some(nbow) = model.as_any().downcast_ref::<NbowEncoder>() else {
            return Ok(None);
        };
        let mut scratch = nbow.params().zero_grads();
        let (mut sum, mut n) = (0.0, 0usize);
        for chunk in self.valid.chunks(self.valid_batch) {
            if chunk.len() < 2 {
                continue;
            }
            let (l, k) = nbow.batch_loss_grad(chunk, &mut scratch)?;
            sum += l;
            n += k;
        }
        Ok((n > 0).then(|| sum / n as f64))
    }
}
