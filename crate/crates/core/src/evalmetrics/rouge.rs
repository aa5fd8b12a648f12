use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based precision, recall and F-measure. `beta = 1` gives the harmonic
/// mean; larger values weight recall more.
pub fn rouge_l<T: PartialEq>(hypothesis: &[T], reference: &[T], beta: f64) -> Result<RougeScore, MetricError> {
    if hypothesis.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let l = lcs_len(hypothesis, reference) as f64;
    let precision = l / hypothesis.len() as f64;
    let recall = l / reference.len() as f64;
    let b2 = beta * beta;
    let denom = recall + b2 * precision;
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    };
    Ok(RougeScore { precision, recall, f })
}

/// Mean per-pair F over a corpus.
pub fn rouge_l_corpus<T: PartialEq>(
    hypotheses: &[Vec<T>],
    references: &[Vec<T>],
    beta: f64,
) -> Result<f64, MetricError> {
    if hypotheses.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut total = 0.0;
    for (h, r) in hypotheses.iter().zip(references) {
        // An empty generation scores zero against a non-empty reference.
        total += if h.is_empty() && !r.is_empty() { 0.0 } else { rouge_l(h, r, beta)?.f };
    }
    Ok(total / hypotheses.len() as f64)
}
