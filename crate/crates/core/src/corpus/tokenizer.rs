use std::collections::HashMap;
use std::sync::Mutex;

use super::{bpe_encode, CorpusError, MergeTable, END_OF_WORD};
use crate::synparse::{build_sketch, lex, linearize};

/// Splits on maximal runs of Unicode whitespace; never yields empty tokens.
pub fn space_tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(String::from).collect()
}

/// Turns text into model tokens and back.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &'static str;

    fn tokenize(&self, text: &str) -> Result<Vec<String>, CorpusError>;

    /// Best-effort inverse of [`Tokenizer::tokenize`] for display.
    fn detokenize(&self, tokens: &[String]) -> String {
        tokens.join(" ")
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SpaceTokenizer;

impl Tokenizer for SpaceTokenizer {
    fn name(&self) -> &'static str {
        "space"
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>, CorpusError> {
        Ok(space_tokenize(text))
    }
}

/// Whitespace split followed by BPE on each word.
pub struct BpeTokenizer {
    table: MergeTable,
    cache: Mutex<HashMap<String, Vec<String>>>,
}

impl BpeTokenizer {
    pub fn new(table: MergeTable) -> Self {
        Self {
            table,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn table(&self) -> &MergeTable {
        &self.table
    }

    pub fn encode_word(&self, word: &str) -> Vec<String> {
        if let Some(hit) = self.cache.lock().unwrap().get(word) {
            return hit.clone();
        }
        let pieces = bpe_encode(word, &self.table);
        self.cache.lock().unwrap().insert(word.to_string(), pieces.clone());
        pieces
    }
}

impl Tokenizer for BpeTokenizer {
    fn name(&self) -> &'static str {
        "bpe"
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>, CorpusError> {
        Ok(space_tokenize(text)
            .iter()
            .flat_map(|w| self.encode_word(w))
            .collect())
    }

    fn detokenize(&self, tokens: &[String]) -> String {
        tokens.concat().replace(END_OF_WORD, " ").trim_end().to_string()
    }
}

/// Surface tokens of the indentation-aware lexer (structure tokens dropped).
#[derive(Debug, Clone, Copy, Default)]
pub struct LexTokenizer;

impl Tokenizer for LexTokenizer {
    fn name(&self) -> &'static str {
        "lex"
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>, CorpusError> {
        let tokens = lex(text).map_err(|e| CorpusError::Tokenize(e.to_string()))?;
        Ok(tokens
            .into_iter()
            .filter(|t| !t.kind.is_structural())
            .map(|t| t.text)
            .collect())
    }
}

/// Pre-order linearization of the block tree, with structural markers.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearizedTokenizer;

impl Tokenizer for LinearizedTokenizer {
    fn name(&self) -> &'static str {
        "linearized"
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>, CorpusError> {
        let tokens = lex(text).map_err(|e| CorpusError::Tokenize(e.to_string()))?;
        let sketch = build_sketch(&tokens).map_err(|e| CorpusError::Tokenize(e.to_string()))?;
        Ok(linearize(&sketch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_split_examples() {
        assert_eq!(space_tokenize("def  f(x):"), ["def", "f(x):"]);
        assert!(space_tokenize("").is_empty());
        assert_eq!(space_tokenize("a\tb\nc"), ["a", "b", "c"]);
        assert_eq!(space_tokenize("\u{3000}x\u{a0}y "), ["x", "y"]);
    }

    #[test]
    fn bpe_tokenizer_round_trip() {
        let table = MergeTable {
            merges: vec![("e".into(), "s".into()), ("es".into(), "t".into())],
        };
        let tok = BpeTokenizer::new(table);
        let pieces = tok.tokenize("newest  test").unwrap();
        assert_eq!(pieces, ["n", "e", "w", "est", "</w>", "t", "est", "</w>"]);
        assert_eq!(tok.detokenize(&pieces), "newest test");
    }

    #[test]
    fn lex_and_linearized_tokenizers() {
        assert_eq!(LexTokenizer.tokenize("f(x)").unwrap(), ["f", "(", "x", ")"]);
        assert_eq!(
            LinearizedTokenizer.tokenize("if a:\n  b").unwrap(),
            ["if", "a", ":", "<NEWLINE>", "<INDENT>", "b", "<NEWLINE>", "<DEDENT>"]
        );
        assert!(LexTokenizer.tokenize("s = 'open").is_err());
    }
}
