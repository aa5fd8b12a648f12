use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::CorpusError;

/// File signature of a binarized shard.
pub const SHARD_MAGIC: &[u8; 8] = b"NCCDAT01";

/// Writes `NCCDAT01` followed by `[u32 len][len × u32 id]` records, little-endian.
pub fn write_shard(path: &Path, sequences: &[Vec<u32>]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| CorpusError::io(path, e);
    w.write_all(SHARD_MAGIC).map_err(io)?;
    for seq in sequences {
        w.write_all(&(seq.len() as u32).to_le_bytes()).map_err(io)?;
        for id in seq {
            w.write_all(&id.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_shard(path: &Path) -> Result<Vec<Vec<u32>>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| CorpusError::io(path, e))?;
    if bytes.len() < SHARD_MAGIC.len() || &bytes[..8] != SHARD_MAGIC {
        return Err(CorpusError::BadShard(format!("{}: bad magic", path.display())));
    }
    let mut words = bytes[8..].chunks_exact(4);
    if !words.remainder().is_empty() {
        return Err(CorpusError::BadShard(format!("{}: trailing bytes", path.display())));
    }
    let mut out = Vec::new();
    while let Some(len) = words.next() {
        let len = u32::from_le_bytes(len.try_into().unwrap()) as usize;
        let seq: Vec<u32> = words
            .by_ref()
            .take(len)
            .map(|w| u32::from_le_bytes(w.try_into().unwrap()))
            .collect();
        if seq.len() != len {
            return Err(CorpusError::BadShard(format!("{}: truncated record", path.display())));
        }
        out.push(seq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_little_endian() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        write_shard(&p, &[vec![5, 258]]).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"NCCDAT01");
        assert_eq!(&bytes[8..], &[2, 0, 0, 0, 5, 0, 0, 0, 2, 1, 0, 0][..]);
    }

    #[test]
    fn truncated_shard_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        write_shard(&p, &[vec![1, 2, 3]]).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_shard(&p), Err(CorpusError::BadShard(_))));
        std::fs::write(&p, b"NOTMAGIC").unwrap();
        assert!(matches!(read_shard(&p), Err(CorpusError::BadShard(_))));
    }

    proptest! {
        #[test]
        fn round_trip(seqs in proptest::collection::vec(proptest::collection::vec(any::<u32>(), 0..20), 0..10)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("s.bin");
            write_shard(&p, &seqs).unwrap();
            prop_assert_eq!(read_shard(&p).unwrap(), seqs);
        }
    }
}
