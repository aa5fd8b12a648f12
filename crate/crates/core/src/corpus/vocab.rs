use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::CorpusError;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;

const SPECIALS: [&str; 4] = [PAD, UNK, BOS, EOS];

/// Bidirectional token/id map. Ids are dense; the four specials own ids 0..=3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_of: Vec<String>,
    id_of: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// Specials followed by `tokens` in the given order (duplicates and
    /// specials in `tokens` are skipped).
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self {
            token_of: Vec::new(),
            id_of: HashMap::new(),
        };
        for t in SPECIALS.iter().map(|s| s.to_string()).chain(tokens.into_iter().map(Into::into)) {
            if !v.id_of.contains_key(&t) {
                v.id_of.insert(t.clone(), v.token_of.len() as u32);
                v.token_of.push(t);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.token_of.len()
    }

    /// True when only the special tokens are present.
    pub fn is_empty(&self) -> bool {
        self.token_of.len() == SPECIALS.len()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.id_of.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.token_of.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.token_of
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Maps ids back to tokens; out-of-range ids decode as `<unk>`.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(UNK).to_string())
            .collect()
    }

    pub fn is_special(id: u32) -> bool {
        id <= EOS_ID
    }

    /// One token per line; the first four lines are the specials.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = self.token_of.join("\n");
        out.push('\n');
        fs::write(path, out).map_err(|e| CorpusError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < SPECIALS.len() || lines[..SPECIALS.len()] != SPECIALS {
            return Err(CorpusError::BadVocab(format!(
                "{}: missing special header lines",
                path.display()
            )));
        }
        let vocab = Self::from_tokens(lines[SPECIALS.len()..].iter().copied());
        if vocab.len() != lines.len() {
            return Err(CorpusError::BadVocab(format!("{}: duplicate tokens", path.display())));
        }
        Ok(vocab)
    }
}

/// Token frequencies over a collection of token sequences.
pub fn count_tokens<'a, I, S>(sequences: I) -> HashMap<String, u64>
where
    I: IntoIterator<Item = &'a [S]>,
    S: AsRef<str> + 'a,
{
    let mut counts = HashMap::new();
    for seq in sequences {
        for t in seq {
            *counts.entry(t.as_ref().to_string()).or_insert(0) += 1;
        }
    }
    counts
}

/// Specials first, then tokens with `count >= min_count` by descending count
/// (ties lexicographic), truncated to `max_size` entries in total.
pub fn build_vocab(token_counts: &HashMap<String, u64>, min_count: u64, max_size: usize) -> Vocabulary {
    let max_size = max_size.max(SPECIALS.len());
    let mut kept: Vec<(&String, u64)> = token_counts
        .iter()
        .filter(|(t, &c)| c >= min_count && !SPECIALS.contains(&t.as_str()))
        .map(|(t, &c)| (t, c))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    kept.truncate(max_size - SPECIALS.len());
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(items: &[(&str, u64)]) -> HashMap<String, u64> {
        items.iter().map(|(w, c)| (w.to_string(), *c)).collect()
    }

    #[test]
    fn sorted_by_count_then_token() {
        let v = build_vocab(&counts(&[("a", 3), ("b", 3), ("c", 1)]), 2, 100);
        assert_eq!(v.tokens(), &[PAD, UNK, BOS, EOS, "a", "b"]);
        let v = build_vocab(&counts(&[("z", 1), ("y", 5), ("x", 5)]), 1, 100);
        assert_eq!(&v.tokens()[4..], &["x", "y", "z"]);
    }

    #[test]
    fn empty_counts_yield_specials() {
        let v = build_vocab(&HashMap::new(), 1, 10);
        assert_eq!(v.len(), 4);
        assert!(v.is_empty());
    }

    #[test]
    fn below_threshold_maps_to_unk() {
        let v = build_vocab(&counts(&[("x", 1)]), 2, 10);
        assert_eq!(v.id("x"), UNK_ID);
    }

    #[test]
    fn max_size_truncates() {
        let v = build_vocab(&counts(&[("a", 9), ("b", 8), ("c", 7)]), 1, 6);
        assert_eq!(v.len(), 6);
        assert_eq!(v.get("c"), None);
    }

    #[test]
    fn id_round_trip_and_file_round_trip() {
        let v = build_vocab(&counts(&[("def", 4), ("(", 4), ("x", 2)]), 1, 100);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), i as u32);
        }
        let ids = v.encode(&["def", "x", "nope"]);
        assert_eq!(v.decode(&ids), vec!["def", "x", UNK]);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        v.save(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("<pad>\n<unk>\n<bos>\n<eos>\n"));
        assert_eq!(Vocabulary::load(&p).unwrap(), v);
    }

    #[test]
    fn load_rejects_missing_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        std::fs::write(&p, "a\nb\n").unwrap();
        assert!(matches!(Vocabulary::load(&p), Err(CorpusError::BadVocab(_))));
    }
}
