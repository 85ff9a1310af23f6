use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("dataset line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("question {id:?}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("duplicate question id {0:?}")]
    DuplicateId(String),
}

/// One question: either multiple choice with `options`, or open ended with
/// candidates obtained from the backend at answer time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionRecord {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub open_ended: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_candidates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_text: Option<String>,
}

impl QuestionRecord {
    pub fn multiple_choice(
        id: impl Into<String>,
        question: impl Into<String>,
        options: Vec<String>,
        gold_index: Option<usize>,
    ) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            options,
            open_ended: false,
            n_candidates: None,
            gold_index,
            gold_text: None,
        }
    }

    pub fn open(id: impl Into<String>, question: impl Into<String>, n_candidates: Option<usize>) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            options: Vec::new(),
            open_ended: true,
            n_candidates,
            gold_index: None,
            gold_text: None,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |reason: String| Err(DatasetError::Invalid { id: self.id.clone(), reason });
        if self.question.trim().is_empty() {
            return invalid("empty question".into());
        }
        if self.open_ended {
            if !self.options.is_empty() {
                return invalid("open-ended question must not list options".into());
            }
            if self.gold_index.is_some() {
                return invalid("open-ended question takes gold_text, not gold_index".into());
            }
            if self.n_candidates == Some(0) {
                return invalid("n_candidates must be at least 1".into());
            }
            return Ok(());
        }
        if self.options.len() < 2 {
            return invalid(format!("{} option(s); at least 2 required", self.options.len()));
        }
        if self.options.iter().any(|o| o.trim().is_empty()) {
            return invalid("empty option".into());
        }
        if let Some(g) = self.gold_index.filter(|&g| g >= self.options.len()) {
            return invalid(format!("gold_index {g} out of range for {} options", self.options.len()));
        }
        Ok(())
    }

    pub fn has_gold(&self) -> bool {
        if self.open_ended {
            self.gold_text.is_some()
        } else {
            self.gold_index.is_some()
        }
    }
}

/// Parses line-delimited records, skipping blank lines.
pub fn parse_jsonl(text: &str) -> Result<Vec<QuestionRecord>, DatasetError> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: QuestionRecord =
            serde_json::from_str(line).map_err(|e| DatasetError::Parse { line: i + 1, message: e.to_string() })?;
        record.validate()?;
        if !seen.insert(record.id.clone()) {
            return Err(DatasetError::DuplicateId(record.id));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<QuestionRecord>, DatasetError> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    parse_jsonl(&text)
}

pub fn to_jsonl(records: &[QuestionRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_record_shapes_parse() {
        let text = r#"{"id": "q1", "question": "Can a magnet attract a penny?", "options": ["yes", "no"], "gold_index": 1}

{"id": "q2", "question": "What is a paperclip made of?", "open_ended": true, "n_candidates": 3, "gold_text": "steel"}
"#;
        let records = parse_jsonl(text).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].gold_index, Some(1));
        assert!(records[1].open_ended && records[1].has_gold());
        assert_eq!(parse_jsonl(&to_jsonl(&records)).unwrap(), records);
    }

    #[test]
    fn invalid_records_are_rejected() {
        let one_option = r#"{"id": "q", "question": "Why?", "options": ["a"]}"#;
        assert!(matches!(parse_jsonl(one_option), Err(DatasetError::Invalid { .. })));
        let gold = r#"{"id": "q", "question": "Why?", "options": ["a", "b"], "gold_index": 2}"#;
        assert!(matches!(parse_jsonl(gold), Err(DatasetError::Invalid { .. })));
        let unknown = r#"{"id": "q", "question": "Why?", "options": ["a", "b"], "answer": 1}"#;
        assert!(matches!(parse_jsonl(unknown), Err(DatasetError::Parse { line: 1, .. })));
        let dup = "{\"id\": \"q\", \"question\": \"Why?\", \"options\": [\"a\", \"b\"]}\n".repeat(2);
        assert!(matches!(parse_jsonl(&dup), Err(DatasetError::DuplicateId(_))));
    }
}
