/// Anything that predicts a distribution over the next token.
pub trait LanguageModel {
    fn vocab_size(&self) -> usize;

    /// Probability of every vocabulary entry following `prefix`.
    fn next_distribution(&self, prefix: &[u32]) -> Vec<f64>;

    /// `ln P(seq[t] | seq[..t])` for `t = 1..seq.len()`.
    fn sequence_log_probs(&self, seq: &[u32]) -> Vec<f64> {
        (1..seq.len())
            .map(|t| self.next_distribution(&seq[..t])[seq[t] as usize].ln())
            .collect()
    }

    /// Next-token distribution after every proper prefix `seq[..t]`,
    /// `t = 1..seq.len()`.
    fn prefix_distributions(&self, seq: &[u32]) -> Vec<Vec<f64>> {
        (1..seq.len()).map(|t| self.next_distribution(&seq[..t])).collect()
    }
}

/// The language-model view of a registered model, if it has one.
pub fn as_language_model(model: &dyn super::NccModel) -> Option<&dyn LanguageModel> {
    let any = model.as_any();
    if let Some(m) = any.downcast_ref::<super::RnnLm>() {
        return Some(m);
    }
    any.downcast_ref::<super::NgramModel>().map(|m| m as &dyn LanguageModel)
}

/// Top `k` next tokens by probability, descending; ties go to the smaller id.
pub fn lm_topk<M: LanguageModel + ?Sized>(model: &M, prefix: &[u32], k: usize) -> Vec<(u32, f64)> {
    topk_of(&model.next_distribution(prefix), k)
}

pub(crate) fn topk_of(dist: &[f64], k: usize) -> Vec<(u32, f64)> {
    let mut ranked: Vec<(u32, f64)> = dist.iter().enumerate().map(|(i, &p)| (i as u32, p)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

