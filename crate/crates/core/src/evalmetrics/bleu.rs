use std::collections::HashMap;
use std::hash::Hash;

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BleuConfig {
    pub max_n: usize,
    /// Add one to numerator and denominator of every precision with n >= 2.
    pub smooth: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self { max_n: 4, smooth: false }
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU with one reference per hypothesis.
///
/// Orders longer than every hypothesis have no n-grams to score and are
/// left out of the geometric mean, so a corpus compared against itself
/// always scores 1.
pub fn bleu<T: Eq + Hash>(hypotheses: &[Vec<T>], references: &[Vec<T>], config: BleuConfig) -> Result<f64, MetricError> {
    if hypotheses.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let hyp_len: usize = hypotheses.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    if hyp_len == 0 || config.max_n == 0 {
        return Ok(0.0);
    }
    let longest = hypotheses.iter().map(Vec::len).max().unwrap_or(0);
    let orders = config.max_n.min(longest);

    let mut log_sum = 0.0;
    for n in 1..=orders {
        let (mut matched, mut total) = (0usize, 0usize);
        for (h, r) in hypotheses.iter().zip(references) {
            let ref_counts = ngram_counts(r, n);
            for (gram, c) in ngram_counts(h, n) {
                matched += c.min(ref_counts.get(gram).copied().unwrap_or(0));
                total += c;
            }
        }
        let (num, den) = if config.smooth && n >= 2 {
            (matched as f64 + 1.0, total as f64 + 1.0)
        } else {
            (matched as f64, total as f64)
        };
        if num == 0.0 {
            return Ok(0.0);
        }
        log_sum += (num / den).ln();
    }
    let bp = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(bp * (log_sum / orders as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    /// Straightforward recomputation: enumerate every n-gram position and
    /// clip by counting occurrences with nested loops.
    fn naive_bleu(hyps: &[Vec<u8>], refs: &[Vec<u8>], max_n: usize, smooth: bool) -> f64 {
        let c: usize = hyps.iter().map(Vec::len).sum();
        let r: usize = refs.iter().map(Vec::len).sum();
        if c == 0 {
            return 0.0;
        }
        let orders = max_n.min(hyps.iter().map(Vec::len).max().unwrap());
        let mut product = 1.0;
        for n in 1..=orders {
            let (mut m, mut t) = (0.0, 0.0);
            for (h, rf) in hyps.iter().zip(refs) {
                let hg: Vec<&[u8]> = if h.len() >= n { h.windows(n).collect() } else { vec![] };
                let rg: Vec<&[u8]> = if rf.len() >= n { rf.windows(n).collect() } else { vec![] };
                let mut seen: Vec<&[u8]> = Vec::new();
                for g in &hg {
                    if seen.contains(g) {
                        continue;
                    }
                    seen.push(g);
                    let in_h = hg.iter().filter(|x| *x == g).count();
                    let in_r = rg.iter().filter(|x| *x == g).count();
                    m += in_h.min(in_r) as f64;
                }
                t += hg.len() as f64;
            }
            if smooth && n >= 2 {
                m += 1.0;
                t += 1.0;
            }
            if m == 0.0 {
                return 0.0;
            }
            product *= m / t;
        }
        let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
        bp * product.powf(1.0 / orders as f64)
    }

    #[test]
    fn worked_example() {
        let cfg = BleuConfig { max_n: 2, smooth: false };
        let b = bleu(&[toks("the cat")], &[toks("the cat sat")], cfg).unwrap();
        assert!((b - 0.606531).abs() < 1e-6, "{b}");
    }

    #[test]
    fn identity_no_overlap_and_errors() {
        let h = vec![toks("a b c d e"), toks("x")];
        assert_eq!(bleu(&h, &h, BleuConfig::default()).unwrap(), 1.0);
        assert_eq!(bleu(&[toks("a b")], &[toks("c d")], BleuConfig::default()).unwrap(), 0.0);
        assert_eq!(
            bleu(&[toks("a")], &[], BleuConfig::default()),
            Err(MetricError::LengthMismatch { hypotheses: 1, references: 0 })
        );
    }

    proptest! {
        #[test]
        fn agrees_with_naive(
            pairs in prop::collection::vec(
                (prop::collection::vec(0u8..5, 0..10), prop::collection::vec(0u8..5, 1..10)), 1..4),
            max_n in 1usize..5,
            smooth in any::<bool>(),
        ) {
            let (h, r): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let got = bleu(&h, &r, BleuConfig { max_n, smooth }).unwrap();
            prop_assert!((got - naive_bleu(&h, &r, max_n, smooth)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&got));
        }

        #[test]
        fn self_bleu_is_one_and_relabeling_invariant(
            h in prop::collection::vec(prop::collection::vec(0u8..5, 1..10), 1..4),
            r in prop::collection::vec(prop::collection::vec(0u8..5, 1..10), 1..4),
        ) {
            prop_assert_eq!(bleu(&h, &h, BleuConfig::default()).unwrap(), 1.0);
            let n = h.len().min(r.len());
            let relabel = |v: &Vec<Vec<u8>>| -> Vec<Vec<u8>> {
                v.iter().map(|s| s.iter().map(|t| 4 - t).collect()).collect()
            };
            let a = bleu(&h[..n], &r[..n], BleuConfig::default()).unwrap();
            let b = bleu(&relabel(&h)[..n], &relabel(&r)[..n], BleuConfig::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
