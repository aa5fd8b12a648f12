use super::MetricError;

pub const DEFAULT_CUTOFF: usize = 10;

/// 1-based rank of the gold item; `None` when it was not ranked at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankedPrediction {
    rank: Option<usize>,
}

impl RankedPrediction {
    /// A rank of 0 is treated as absent.
    pub fn new(rank: Option<usize>) -> Self {
        Self {
            rank: rank.filter(|&r| r >= 1),
        }
    }

    pub fn hit(rank: usize) -> Self {
        Self::new(Some(rank))
    }

    pub fn miss() -> Self {
        Self { rank: None }
    }

    pub fn rank(&self) -> Option<usize> {
        self.rank
    }
}

/// Mean reciprocal rank; ranks beyond `cutoff` contribute 0.
pub fn mrr(ranks: &[RankedPrediction], cutoff: usize) -> Result<f64, MetricError> {
    if ranks.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let total: f64 = ranks
        .iter()
        .map(|r| match r.rank {
            Some(k) if k <= cutoff => 1.0 / k as f64,
            _ => 0.0,
        })
        .sum();
    Ok(total / ranks.len() as f64)
}

/// 1-based rank of `gold` under `scores` (higher is better). Items tied with
/// the gold score rank ahead of it only if they have a smaller index, which
/// matches the tie-break used for top-k lists.
pub fn rank_of(scores: &[f64], gold: usize) -> Option<usize> {
    let g = *scores.get(gold)?;
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > g || (s == g && i < gold))
        .count();
    Some(ahead + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_examples() {
        let r = [RankedPrediction::hit(1), RankedPrediction::hit(2), RankedPrediction::miss()];
        assert_eq!(mrr(&r, 10).unwrap(), 0.5);
        assert_eq!(mrr(&[RankedPrediction::hit(1); 4], 10).unwrap(), 1.0);
        assert_eq!(mrr(&[RankedPrediction::hit(11), RankedPrediction::hit(50)], 10).unwrap(), 0.0);
        assert_eq!(mrr(&[], 10), Err(MetricError::EmptyInput));
    }

    #[test]
    fn rank_of_breaks_ties_by_index() {
        assert_eq!(rank_of(&[0.1, 0.5, 0.5, 0.2], 2), Some(2));
        assert_eq!(rank_of(&[0.1, 0.5, 0.5, 0.2], 1), Some(1));
        assert_eq!(rank_of(&[0.1, 0.5, 0.5, 0.2], 0), Some(4));
        assert_eq!(rank_of(&[0.1], 3), None);
    }

    proptest! {
        #[test]
        fn permutation_invariant_and_monotone(
            ranks in prop::collection::vec(prop::option::of(1usize..20), 1..20),
            which in any::<prop::sample::Index>(),
        ) {
            let preds: Vec<_> = ranks.iter().map(|&r| RankedPrediction::new(r)).collect();
            let base = mrr(&preds, 10).unwrap();
            let mut rev = preds.clone();
            rev.reverse();
            prop_assert!((mrr(&rev, 10).unwrap() - base).abs() < 1e-12);

            let i = which.index(preds.len());
            let mut better = preds.clone();
            better[i] = RankedPrediction::hit(preds[i].rank().map_or(1, |r| r.saturating_sub(1).max(1)));
            prop_assert!(mrr(&better, 10).unwrap() >= base - 1e-15);
        }
    }
}
