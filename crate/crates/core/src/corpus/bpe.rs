//! Byte-pair encoding over whitespace-delimited words with an explicit
//! end-of-word symbol.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::CorpusError;

/// End-of-word marker appended to every word before merging.
pub const END_OF_WORD: &str = "</w>";

/// Learned merges in the order they were learned.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeTable {
    pub merges: Vec<(String, String)>,
}

impl MergeTable {
    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }
}

/// Symbol order used to break frequency ties: plain code-point order, except
/// that the end-of-word marker sorts after every character.
fn symbol_cmp(a: &str, b: &str) -> Ordering {
    fn units(s: &str) -> impl Iterator<Item = u32> + '_ {
        let body = s.strip_suffix(END_OF_WORD).unwrap_or(s);
        let eow = (body.len() != s.len()).then_some(u32::MAX);
        body.chars().map(|c| c as u32).chain(eow)
    }
    units(a).cmp(units(b))
}

fn initial_symbols(word: &str) -> Vec<String> {
    word.chars()
        .map(String::from)
        .chain(std::iter::once(END_OF_WORD.to_string()))
        .collect()
}

fn apply_merge(symbols: &mut Vec<String>, left: &str, right: &str) {
    if symbols.len() < 2 {
        return;
    }
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
        } else {
            out.push(std::mem::take(&mut symbols[i]));
            i += 1;
        }
    }
    *symbols = out;
}

/// Learns up to `num_merges` merges from weighted words.
///
/// Each round merges the most frequent adjacent pair (frequencies weighted by
/// word count); equal frequencies go to the smallest pair under
/// [`symbol_cmp`]. Learning stops early once the best frequency drops below
/// `min_pair_freq`.
pub fn bpe_train(
    word_counts: &BTreeMap<String, u64>,
    num_merges: usize,
    min_pair_freq: u64,
) -> Result<MergeTable, CorpusError> {
    let mut words: Vec<(Vec<String>, u64)> = word_counts
        .iter()
        .filter(|(w, c)| !w.is_empty() && **c > 0)
        .map(|(w, &c)| (initial_symbols(w), c))
        .collect();
    if words.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }

    let mut table = MergeTable::default();
    while table.merges.len() < num_merges {
        let mut freqs: HashMap<(&str, &str), u64> = HashMap::new();
        for (symbols, count) in &words {
            for pair in symbols.windows(2) {
                *freqs.entry((&pair[0], &pair[1])).or_default() += count;
            }
        }
        let best = freqs.into_iter().max_by(|(pa, fa), (pb, fb)| {
            fa.cmp(fb).then_with(|| {
                // Smaller pair wins ties, so it must compare as "greater" here.
                symbol_cmp(pb.0, pa.0).then_with(|| symbol_cmp(pb.1, pa.1))
            })
        });
        let Some(((left, right), freq)) = best else {
            break;
        };
        if freq < min_pair_freq {
            break;
        }
        let (left, right) = (left.to_string(), right.to_string());
        for (symbols, _) in &mut words {
            apply_merge(symbols, &left, &right);
        }
        table.merges.push((left, right));
    }
    Ok(table)
}

/// Splits `word` into subtokens by applying every merge of `table` in order.
pub fn bpe_encode(word: &str, table: &MergeTable) -> Vec<String> {
    let mut symbols = initial_symbols(word);
    for (left, right) in &table.merges {
        if symbols.len() < 2 {
            break;
        }
        apply_merge(&mut symbols, left, right);
    }
    symbols
}

/// Writes one merge per line as `left right`.
pub fn write_merges(path: &Path, table: &MergeTable) -> Result<(), CorpusError> {
    let mut out = String::new();
    for (l, r) in &table.merges {
        out.push_str(l);
        out.push(' ');
        out.push_str(r);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CorpusError::io(path, e))
}

pub fn read_merges(path: &Path) -> Result<MergeTable, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut table = MergeTable::default();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                let pair = (l.to_string(), r.to_string());
                if !seen.insert(pair.clone()) {
                    return Err(CorpusError::BadMerges(format!("duplicate merge at line {}", i + 1)));
                }
                table.merges.push(pair);
            }
            _ => return Err(CorpusError::BadMerges(format!("line {}: `{line}`", i + 1))),
        }
    }
    Ok(table)
}
