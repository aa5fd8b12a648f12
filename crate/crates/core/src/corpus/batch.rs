use super::{CorpusError, Vocabulary, BOS_ID, EOS_ID, PAD_ID};

/// Right-padded id matrix with per-row true lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniBatch {
    /// `rows × width`, row-major.
    pub ids: Vec<Vec<u32>>,
    pub lengths: Vec<usize>,
    /// Next-token (or decoder) targets, same layout as `ids`.
    pub targets: Option<Vec<Vec<u32>>>,
}

impl MiniBatch {
    /// Pads already-encoded sequences to a common width.
    pub fn from_ids(sequences: &[Vec<u32>]) -> Result<Self, CorpusError> {
        if sequences.is_empty() {
            return Err(CorpusError::EmptyBatch);
        }
        let width = sequences.iter().map(Vec::len).max().unwrap_or(0);
        let ids = sequences
            .iter()
            .map(|s| {
                let mut row = s.clone();
                row.resize(width, PAD_ID);
                row
            })
            .collect();
        Ok(Self {
            ids,
            lengths: sequences.iter().map(Vec::len).collect(),
            targets: None,
        })
    }

    /// Language-model batch: inputs are `seq[..n-1]`, targets `seq[1..]`.
    /// Sequences shorter than two tokens contribute an empty row.
    pub fn for_language_model(sequences: &[Vec<u32>]) -> Result<Self, CorpusError> {
        let inputs: Vec<Vec<u32>> = sequences
            .iter()
            .map(|s| s[..s.len().saturating_sub(1)].to_vec())
            .collect();
        let targets: Vec<Vec<u32>> = sequences
            .iter()
            .map(|s| if s.len() < 2 { Vec::new() } else { s[1..].to_vec() })
            .collect();
        let mut batch = Self::from_ids(&inputs)?;
        let width = batch.width();
        batch.targets = Some(
            targets
                .into_iter()
                .map(|mut t| {
                    t.resize(width, PAD_ID);
                    t
                })
                .collect(),
        );
        Ok(batch)
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn width(&self) -> usize {
        self.ids.first().map_or(0, Vec::len)
    }

    pub fn num_tokens(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn num_padding(&self) -> usize {
        self.rows() * self.width() - self.num_tokens()
    }

    /// Unpadded view of row `b`.
    pub fn row(&self, b: usize) -> &[u32] {
        &self.ids[b][..self.lengths[b]]
    }
}

/// Encodes token sequences with `vocab` (unknowns become `<unk>`), optionally
/// wraps them in `<bos>`/`<eos>`, and right-pads to the longest row.
pub fn encode_batch<S: AsRef<str>>(
    sequences: &[Vec<S>],
    vocab: &Vocabulary,
    add_bos_eos: bool,
) -> Result<MiniBatch, CorpusError> {
    if sequences.is_empty() {
        return Err(CorpusError::EmptyBatch);
    }
    let encoded: Vec<Vec<u32>> = sequences
        .iter()
        .map(|seq| {
            let body = vocab.encode(seq);
            if add_bos_eos {
                std::iter::once(BOS_ID).chain(body).chain(std::iter::once(EOS_ID)).collect()
            } else {
                body
            }
        })
        .collect();
    MiniBatch::from_ids(&encoded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn abc() -> Vocabulary {
        Vocabulary::from_tokens(["a", "b", "c"])
    }

    #[test]
    fn pads_to_longest() {
        let b = encode_batch(&[vec!["a", "b", "c"], vec!["a"]], &abc(), false).unwrap();
        assert_eq!(b.ids, vec![vec![4, 5, 6], vec![4, 0, 0]]);
        assert_eq!(b.lengths, vec![3, 1]);
    }

    #[test]
    fn unknown_maps_to_unk() {
        let b = encode_batch(&[vec!["z"]], &abc(), false).unwrap();
        assert_eq!(b.ids, vec![vec![1]]);
    }

    #[test]
    fn wraps_with_bos_eos() {
        let b = encode_batch(&[vec!["a"]], &abc(), true).unwrap();
        assert_eq!(b.ids, vec![vec![2, 4, 3]]);
        assert_eq!(b.lengths, vec![3]);
    }

    #[test]
    fn empty_batch() {
        let empty: Vec<Vec<&str>> = vec![];
        assert!(matches!(encode_batch(&empty, &abc(), false), Err(CorpusError::EmptyBatch)));
    }

    #[test]
    fn language_model_shift() {
        let b = MiniBatch::for_language_model(&[vec![2, 4, 5, 3], vec![2, 3]]).unwrap();
        assert_eq!(b.ids, vec![vec![2, 4, 5], vec![2, 0, 0]]);
        assert_eq!(b.targets.unwrap(), vec![vec![4, 5, 3], vec![3, 0, 0]]);
        assert_eq!(b.lengths, vec![3, 1]);
    }

    proptest! {
        #[test]
        fn padding_accounting(seqs in proptest::collection::vec(proptest::collection::vec(0u32..7, 0..9), 1..6)) {
            let b = MiniBatch::from_ids(&seqs).unwrap();
            prop_assert_eq!(b.num_padding(), b.rows() * b.width() - seqs.iter().map(Vec::len).sum::<usize>());
            for (r, s) in seqs.iter().enumerate() {
                prop_assert!(b.lengths[r] <= b.width());
                prop_assert_eq!(b.row(r), s.as_slice());
                prop_assert!(b.ids[r][s.len()..].iter().all(|&i| i == PAD_ID));
            }
        }
    }
}
