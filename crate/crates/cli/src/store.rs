//! Append-only proof log with an in-memory index.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use backchain_core::pipeline::{AnswerResult, QuestionRecord};
use backchain_core::SearchConfig;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("proof store {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("proof store {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofRecord {
    pub proof_id: String,
    pub question: QuestionRecord,
    pub result: AnswerResult,
    pub cfg: SearchConfig,
    pub created_at: DateTime<Utc>,
}

#[derive(Deserialize)]
struct IdOnly {
    proof_id: String,
}

/// Records are kept as the exact JSON written to disk, so a record read
/// back after a restart is byte-identical.
pub struct ProofStore {
    path: Option<PathBuf>,
    file: Mutex<Option<File>>,
    index: RwLock<HashMap<String, String>>,
}

impl ProofStore {
    pub fn in_memory() -> Self {
        Self { path: None, file: Mutex::new(None), index: RwLock::new(HashMap::new()) }
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let io = |source| StoreError::Io { path: path.clone(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut index = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let id: IdOnly = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                index.insert(id.proof_id, line);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(Self { path: Some(path), file: Mutex::new(Some(file)), index: RwLock::new(index) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the record and returns its JSON body.
    pub fn append(&self, record: &ProofRecord) -> Result<String, StoreError> {
        let body = serde_json::to_string(record).expect("proof record serializes");
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        if let (Some(f), Some(path)) = (file.as_mut(), &self.path) {
            let io = |source| StoreError::Io { path: path.clone(), source };
            f.write_all(format!("{body}\n").as_bytes()).map_err(io)?;
            f.flush().map_err(io)?;
        }
        self.index.write().unwrap_or_else(|e| e.into_inner()).insert(record.proof_id.clone(), body.clone());
        Ok(body)
    }

    pub fn get(&self, id: &str) -> Option<String> {
        self.index.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reopened_store_returns_identical_bodies() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("proofs.jsonl");
        std::fs::write(&path, "{\"proof_id\": \"a\", \"other\": 1}\n\n").unwrap();
        let store = ProofStore::open(&path).unwrap();
        assert_eq!(store.len(), 1);
        let body = store.get("a").unwrap();
        drop(store);
        let again = ProofStore::open(&path).unwrap();
        assert_eq!(again.get("a").unwrap(), body);
        assert!(again.get("b").is_none());
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("proofs.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(ProofStore::open(&path), Err(StoreError::Corrupt { line: 1, .. })));
    }
}
