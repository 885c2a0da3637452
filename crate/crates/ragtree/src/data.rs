//! Dataset and corpus loaders, and JSONL helpers.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ragtree_core::retrieval::CorpusEntry;
use ragtree_core::Question;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: duplicate question id {id:?}")]
    DuplicateId { path: PathBuf, line: usize, id: String },
}

/// One dataset line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    pub golden_answers: Vec<String>,
}

impl From<&Question> for DatasetRecord {
    fn from(q: &Question) -> Self {
        DatasetRecord { id: q.id.clone(), question: q.text.clone(), golden_answers: q.gold_answers.clone() }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, DataError> {
    File::open(path).map(BufReader::new).map_err(|source| DataError::Io { path: path.into(), source })
}

/// Parses non-blank lines as JSON values of type `T`; errors carry the
/// 1-based line number.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>, DataError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|source| DataError::Io { path: path.into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|e| DataError::Parse { path: path.into(), line: i + 1, message: e.to_string() })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Question>, DataError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, rec) in read_jsonl::<DatasetRecord>(path)? {
        let q = Question::new(rec.id, rec.question, rec.golden_answers)
            .map_err(|e| DataError::Parse { path: path.into(), line, message: e.to_string() })?;
        if !seen.insert(q.id.clone()) {
            return Err(DataError::DuplicateId { path: path.into(), line, id: q.id });
        }
        out.push(q);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusEntry>, DataError> {
    Ok(read_jsonl::<CorpusEntry>(path)?.into_iter().map(|(_, e)| e).collect())
}

/// Writes one compact JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Write to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
