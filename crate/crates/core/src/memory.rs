//! Persistent store of user belief corrections and the context assembly
//! that feeds them back into the backend.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::Context;
use crate::statement::Statement;

/// Default number of context sentences handed to the backend.
pub const DEFAULT_CONTEXT_CAP: usize = 5;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("memory store {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("memory store {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    User,
    Import,
}

/// A user-asserted truth value for one statement. One line of the
/// persistence file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefOverride {
    #[serde(rename = "text")]
    pub statement: Statement,
    pub asserted_true: bool,
    pub source: Source,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub note: Option<String>,
}

impl BeliefOverride {
    pub fn new(statement: Statement, asserted_true: bool) -> Self {
        Self { statement, asserted_true, source: Source::User, created_at: Utc::now(), note: None }
    }

    /// The sentence placed in context: the statement itself, or its
    /// negation when asserted false.
    pub fn as_sentence(&self) -> Statement {
        if self.asserted_true {
            self.statement.clone()
        } else {
            self.statement.negated()
        }
    }
}

/// Overrides keyed by statement key; newer entries replace older ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryStore {
    path: Option<PathBuf>,
    overrides: BTreeMap<String, BeliefOverride>,
}

impl MemoryStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or starts) the store persisted at `path`.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, MemoryError> {
        let path = path.into();
        let mut store = Self { path: Some(path.clone()), overrides: BTreeMap::new() };
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(store),
            Err(source) => return Err(MemoryError::Io { path, source }),
        };
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let entry: BeliefOverride = serde_json::from_str(line).map_err(|e| MemoryError::Corrupt {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            store.insert(entry);
        }
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.overrides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.overrides.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&BeliefOverride> {
        self.overrides.get(key)
    }

    /// All overrides, oldest first (ties by key).
    pub fn list(&self) -> Vec<&BeliefOverride> {
        let mut all: Vec<_> = self.overrides.values().collect();
        all.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.statement.key().cmp(b.statement.key())));
        all
    }

    fn insert(&mut self, entry: BeliefOverride) {
        self.overrides.insert(entry.statement.key().to_string(), entry);
    }

    pub fn add_override(&mut self, statement: Statement, asserted_true: bool) -> Result<BeliefOverride, MemoryError> {
        self.upsert(BeliefOverride::new(statement, asserted_true))
    }

    /// Inserts or replaces by key and persists before returning. On a
    /// persistence failure the in-memory store is left unchanged.
    pub fn upsert(&mut self, entry: BeliefOverride) -> Result<BeliefOverride, MemoryError> {
        let mut next = self.overrides.clone();
        next.insert(entry.statement.key().to_string(), entry.clone());
        self.persist_map(&next)?;
        self.overrides = next;
        Ok(entry)
    }

    /// Removes the override for `key` (a statement key or any text that
    /// normalizes to one).
    pub fn remove(&mut self, key: &str) -> Result<Option<BeliefOverride>, MemoryError> {
        let key = crate::statement::normalize_key(key);
        if !self.overrides.contains_key(&key) {
            return Ok(None);
        }
        let mut next = self.overrides.clone();
        let removed = next.remove(&key);
        self.persist_map(&next)?;
        self.overrides = next;
        Ok(removed)
    }

    fn persist_map(&self, map: &BTreeMap<String, BeliefOverride>) -> Result<(), MemoryError> {
        let Some(path) = &self.path else { return Ok(()) };
        let io = |source| MemoryError::Io { path: path.clone(), source };
        let mut entries: Vec<_> = map.values().collect();
        entries.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.statement.key().cmp(b.statement.key())));
        let mut body = String::new();
        for entry in entries {
            body.push_str(&serde_json::to_string(entry).expect("override serializes"));
            body.push('\n');
        }
        // write-then-rename so readers never see a half-written file
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(dir).map_err(io)?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let mut file = fs::File::create(&tmp).map_err(io)?;
        file.write_all(body.as_bytes()).map_err(io)?;
        file.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }
}

const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "can", "cannot", "could", "will", "would", "do",
    "does", "did", "not", "no", "yes", "of", "to", "in", "on", "at", "by", "for", "with", "and", "or", "it", "its",
    "this", "that", "what", "which", "who", "how", "why", "when", "has", "have", "true", "false", "from", "as",
];

/// Content tokens of a text: normalized words minus stop words.
pub fn content_tokens(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    crate::statement::normalize_key(text)
        .split(' ')
        .filter(|t| !t.is_empty() && !STOP_WORDS.contains(t))
        .filter(|t| seen.insert(t.to_string()))
        .map(str::to_string)
        .collect()
}

/// Two tokens match when equal, or when one is a prefix of the other and
/// the shorter is at least five characters ("magnet" / "magnetic").
fn tokens_match(a: &str, b: &str) -> bool {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    short == long || (short.chars().count() >= 5 && long.starts_with(short))
}

/// Fraction of the override's content tokens that match some query token.
pub fn overlap_score(override_text: &str, query_tokens: &[String]) -> f64 {
    let tokens = content_tokens(override_text);
    if tokens.is_empty() {
        return 0.0;
    }
    let hits = tokens.iter().filter(|t| query_tokens.iter().any(|q| tokens_match(t, q))).count();
    hits as f64 / tokens.len() as f64
}

/// The `m` stored overrides most relevant to a question and its
/// hypotheses. Overrides sharing no content token are never returned.
/// Ties go to the older override, then to the smaller key.
pub fn retrieve_relevant<'s>(
    store: &'s MemoryStore,
    question: &str,
    hypotheses: &[Statement],
    m: usize,
) -> Vec<&'s BeliefOverride> {
    if m == 0 {
        return Vec::new();
    }
    let mut query = content_tokens(question);
    for h in hypotheses {
        for t in content_tokens(h.text()) {
            if !query.contains(&t) {
                query.push(t);
            }
        }
    }
    let mut scored: Vec<(f64, &BeliefOverride)> = store
        .overrides
        .values()
        .map(|o| (overlap_score(o.statement.text(), &query), o))
        .filter(|(score, _)| *score > 0.0)
        .collect();
    scored.sort_by(|(sa, a), (sb, b)| {
        sb.total_cmp(sa)
            .then_with(|| a.created_at.cmp(&b.created_at))
            .then_with(|| a.statement.key().cmp(b.statement.key()))
    });
    scored.into_iter().take(m).map(|(_, o)| o).collect()
}

/// A context plus its wire form and how many sentences the cap dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledContext {
    pub context: Context,
    pub serialized: String,
    pub dropped: usize,
}

/// Builds a context from ranked buckets, keeping at most `cap` sentences
/// in rank order (all of high, then medium, then low).
pub fn assemble_context(
    high: Vec<Statement>,
    medium: Vec<Statement>,
    low: Vec<Statement>,
    cap: usize,
) -> AssembledContext {
    let full = Context::new(high, medium, low);
    let total = full.len();
    let mut budget = cap;
    let mut take = |bucket: &[Statement]| -> Vec<Statement> {
        let n = bucket.len().min(budget);
        budget -= n;
        bucket[..n].to_vec()
    };
    let context = Context::new(take(full.high()), take(full.medium()), take(full.low()));
    let dropped = total - context.len();
    if dropped > 0 {
        log::warn!("context cap {cap} exceeded; dropped {dropped} lowest-ranked sentence(s)");
    }
    let serialized = context.serialize();
    AssembledContext { context, serialized, dropped }
}

/// Retrieves relevant overrides and places them in the high bucket.
pub fn context_from_memory(
    store: &MemoryStore,
    question: &str,
    hypotheses: &[Statement],
    cap: usize,
) -> AssembledContext {
    let high =
        retrieve_relevant(store, question, hypotheses, cap).into_iter().map(BeliefOverride::as_sentence).collect();
    assemble_context(high, Vec::new(), Vec::new(), cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn st(s: &str) -> Statement {
        Statement::new(s).unwrap()
    }

    fn at(secs: i64, text: &str, asserted_true: bool) -> BeliefOverride {
        BeliefOverride {
            statement: st(text),
            asserted_true,
            source: Source::User,
            created_at: Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap(),
            note: None,
        }
    }

    #[test]
    fn upsert_keeps_latest_per_key() {
        let mut store = MemoryStore::in_memory();
        store.add_override(st("Copper is not magnetic."), true).unwrap();
        store.add_override(st("copper is NOT magnetic"), false).unwrap();
        assert_eq!(store.len(), 1);
        assert!(!store.get("copper is not magnetic").unwrap().asserted_true);
    }

    #[test]
    fn persist_and_reload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("memory.jsonl");
        let mut store = MemoryStore::open(&path).unwrap();
        store.add_override(st("Copper is not magnetic."), true).unwrap();
        let mut noted = at(5, "Plants need sunlight.", true);
        noted.note = Some("from a textbook".into());
        noted.source = Source::Import;
        store.upsert(noted).unwrap();
        store.upsert(at(9, "The moon is made of cheese.", false)).unwrap();
        let reloaded = MemoryStore::open(&path).unwrap();
        assert_eq!(reloaded, store);

        assert!(store.remove("THE MOON is made of cheese").unwrap().is_some());
        assert!(store.remove("unknown").unwrap().is_none());
        assert_eq!(MemoryStore::open(&path).unwrap().len(), 2);
        assert!(!path.with_extension(format!("tmp{}", std::process::id())).exists());
    }

    #[test]
    fn failed_persist_leaves_store_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let parent = dir.path().join("sub");
        let mut store = MemoryStore::open(parent.join("memory.jsonl")).unwrap();
        // the parent directory is now a regular file, so writes must fail
        fs::write(&parent, "x").unwrap();
        assert!(store.add_override(st("Copper is not magnetic."), true).is_err());
        assert!(store.is_empty());
    }

    #[test]
    fn corrupt_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.jsonl");
        fs::write(&path, "{\"text\": \"A.\"}\n").unwrap();
        assert!(matches!(MemoryStore::open(&path), Err(MemoryError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn retrieval_ranks_by_overlap() {
        let mut store = MemoryStore::in_memory();
        assert!(retrieve_relevant(&store, "Can a magnet attract a penny?", &[], 3).is_empty());
        store.upsert(at(0, "Plants need sunlight.", true)).unwrap();
        store.upsert(at(1, "A penny is shiny.", true)).unwrap();
        store.upsert(at(2, "Copper is not magnetic.", true)).unwrap();
        store.upsert(at(3, "Magnets attract iron filings.", true)).unwrap();
        let hyps = [st("A magnet can attract a penny."), st("A magnet cannot attract a penny.")];
        // query tokens: magnet, attract, penny
        //   copper override:  {copper, magnetic}           -> 1/2
        //   penny override:   {penny, shiny}               -> 1/2, older
        //   magnets override: {magnets, attract, iron, filings} -> 2/4
        //   plants override:  no overlap, excluded
        let got: Vec<_> = retrieve_relevant(&store, "Can a magnet attract a penny?", &hyps, 5)
            .into_iter()
            .map(|o| o.statement.text().to_string())
            .collect();
        assert_eq!(got, vec!["A penny is shiny.", "Copper is not magnetic.", "Magnets attract iron filings."]);
        assert!(retrieve_relevant(&store, "Can a magnet attract a penny?", &hyps, 0).is_empty());
    }

    #[test]
    fn copper_override_ranks_first_for_the_magnet_question() {
        let mut store = MemoryStore::in_memory();
        store.upsert(at(0, "Plants need sunlight.", true)).unwrap();
        store.upsert(at(1, "Copper is not magnetic.", true)).unwrap();
        let hyps = [st("A magnet can attract a penny.")];
        let got = retrieve_relevant(&store, "Can a magnet attract a penny?", &hyps, 1);
        assert_eq!(got[0].statement.text(), "Copper is not magnetic.");
    }

    #[test]
    fn retrieval_ignores_insertion_order() {
        let entries = [
            at(0, "A penny is shiny.", true),
            at(0, "Copper is not magnetic.", true),
            at(4, "Magnets attract iron filings.", true),
        ];
        let mut forward = MemoryStore::in_memory();
        let mut backward = MemoryStore::in_memory();
        for e in &entries {
            forward.upsert(e.clone()).unwrap();
        }
        for e in entries.iter().rev() {
            backward.upsert(e.clone()).unwrap();
        }
        let q = "Can a magnet attract a penny?";
        assert_eq!(retrieve_relevant(&forward, q, &[], 3), retrieve_relevant(&backward, q, &[], 3));
    }

    #[test]
    fn assemble_examples() {
        let a = assemble_context(vec![st("Copper is not magnetic.")], vec![], vec![], DEFAULT_CONTEXT_CAP);
        assert_eq!(a.serialized, "[HIGH] Copper is not magnetic. [MEDIUM] [LOW]");
        assert_eq!(a.dropped, 0);
        let empty = assemble_context(vec![], vec![], vec![], DEFAULT_CONTEXT_CAP);
        assert_eq!(empty.serialized, "[HIGH] [MEDIUM] [LOW]");

        let s = |i: usize| st(&format!("Sentence {i} holds."));
        let capped = assemble_context(vec![s(0), s(1)], vec![s(2), s(3), s(4)], vec![s(5), s(6)], 5);
        assert_eq!(capped.dropped, 2);
        assert_eq!(capped.context.high(), &[s(0), s(1)]);
        assert_eq!(capped.context.medium(), &[s(2), s(3), s(4)]);
        assert!(capped.context.low().is_empty());
    }

    #[test]
    fn negative_overrides_render_as_negations() {
        let o = at(0, "Copper is magnetic.", false);
        assert_eq!(o.as_sentence().text(), "Copper is not magnetic.");
        let mut store = MemoryStore::in_memory();
        store.upsert(o).unwrap();
        let ctx = context_from_memory(&store, "Can a magnet attract a penny?", &[], 5);
        assert_eq!(ctx.serialized, "[HIGH] Copper is not magnetic. [MEDIUM] [LOW]");
    }
}
