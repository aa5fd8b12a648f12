use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// One corpus sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeRecord {
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub docstring: Option<String>,
    pub language: String,
    pub path: String,
}

#[derive(Deserialize)]
struct RawRecord {
    code: Option<String>,
    docstring: Option<String>,
    language: Option<String>,
    path: Option<String>,
}

impl CodeRecord {
    fn from_line(line_no: usize, line: &str) -> Result<Self, CorpusError> {
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        let code = raw.code.ok_or_else(|| CorpusError::MalformedRecord {
            line: line_no,
            reason: "missing `code`".into(),
        })?;
        if code.trim().is_empty() {
            return Err(CorpusError::MalformedRecord {
                line: line_no,
                reason: "empty `code`".into(),
            });
        }
        Ok(Self {
            code,
            docstring: raw.docstring,
            language: raw.language.unwrap_or_else(|| "unknown".into()).to_lowercase(),
            path: raw.path.unwrap_or_default(),
        })
    }
}

/// Streaming reader over a JSONL corpus. Malformed lines are yielded as
/// [`CorpusError::MalformedRecord`] and reading continues.
pub struct RecordStream<R> {
    reader: R,
    line_no: usize,
    buf: String,
}

impl RecordStream<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        Ok(Self::new(BufReader::new(file)))
    }
}

impl<R: BufRead> RecordStream<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            line_no: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for RecordStream<R> {
    type Item = Result<CodeRecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line_no += 1;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(CorpusError::io(PathBuf::from("<stream>"), e))),
            }
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            return Some(CodeRecord::from_line(self.line_no, line));
        }
    }
}

/// Records read from a file plus the line numbers that failed to parse.
#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub records: Vec<CodeRecord>,
    pub malformed_lines: Vec<usize>,
}

impl LoadedCorpus {
    pub fn malformed(&self) -> usize {
        self.malformed_lines.len()
    }
}

/// Reads every record of a JSONL file, skipping (and counting) malformed lines.
pub fn load_records(path: &Path) -> Result<LoadedCorpus, CorpusError> {
    let mut out = LoadedCorpus::default();
    for item in RecordStream::open(path)? {
        match item {
            Ok(rec) => out.records.push(rec),
            Err(CorpusError::MalformedRecord { line, reason }) => {
                log::warn!("{}: skipping line {line}: {reason}", path.display());
                out.malformed_lines.push(line);
            }
            Err(CorpusError::Io { source, .. }) => return Err(CorpusError::io(path, source)),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn direct_field_mapping() {
        let f = write_tmp(r#"{"code":"x = 1","language":"python","path":"a.py"}"#);
        let loaded = load_records(f.path()).unwrap();
        assert_eq!(
            loaded.records,
            vec![CodeRecord {
                code: "x = 1".into(),
                docstring: None,
                language: "python".into(),
                path: "a.py".into(),
            }]
        );
    }

    #[test]
    fn empty_file() {
        let f = write_tmp("");
        let loaded = load_records(f.path()).unwrap();
        assert!(loaded.records.is_empty());
        assert_eq!(loaded.malformed(), 0);
    }

    #[test]
    fn malformed_lines_are_counted_and_skipped() {
        let f = write_tmp(concat!(
            "{\"code\":\"a\",\"language\":\"Python\",\"path\":\"1\"}\n",
            "\n",
            "{\"docstring\":\"no code\",\"language\":\"python\",\"path\":\"2\"}\n",
            "{\"code\":\"b\",\"docstring\":\"doc\",\"language\":\"python\",\"path\":\"3\"}\n",
            "{\"code\":\"c\",\"language\":\"python\",\"path\":\"4\"}\n",
        ));
        let loaded = load_records(f.path()).unwrap();
        assert_eq!(loaded.records.len(), 3);
        assert_eq!(loaded.malformed_lines, vec![3]);
        assert_eq!(loaded.records[0].language, "python");
        assert_eq!(loaded.records[1].docstring.as_deref(), Some("doc"));
    }

    #[test]
    fn stream_reports_line_numbers() {
        let data = "not json\n{\"code\":\"  \"}\n";
        let items: Vec<_> = RecordStream::new(data.as_bytes()).collect();
        assert!(matches!(items[0], Err(CorpusError::MalformedRecord { line: 1, .. })));
        assert!(matches!(items[1], Err(CorpusError::MalformedRecord { line: 2, .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_records(Path::new("/nonexistent/corpus.jsonl")),
            Err(CorpusError::Io { .. })
        ));
    }
}
