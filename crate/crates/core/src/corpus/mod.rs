//! Corpus ingestion and preprocessing: JSONL records, whitespace and BPE
//! tokenization, vocabularies, padded mini-batches and binarized shards.

mod batch;
mod bpe;
mod records;
mod shards;
mod tokenizer;
mod vocab;

pub use batch::{encode_batch, MiniBatch};
pub use bpe::{bpe_encode, bpe_train, read_merges, write_merges, MergeTable, END_OF_WORD};
pub use records::{load_records, CodeRecord, LoadedCorpus, RecordStream};
pub use shards::{read_shard, write_shard, SHARD_MAGIC};
pub use tokenizer::{space_tokenize, BpeTokenizer, LexTokenizer, LinearizedTokenizer, SpaceTokenizer, Tokenizer};
pub use vocab::{build_vocab, count_tokens, Vocabulary, BOS, BOS_ID, EOS, EOS_ID, PAD, PAD_ID, UNK, UNK_ID};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty batch")]
    EmptyBatch,
    #[error("bad vocabulary file: {0}")]
    BadVocab(String),
    #[error("bad merges file: {0}")]
    BadMerges(String),
    #[error("bad shard file: {0}")]
    BadShard(String),
    #[error("tokenizer failed: {0}")]
    Tokenize(String),
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
