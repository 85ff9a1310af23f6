use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendError, Result};
use crate::error::check_unit;
use crate::statement::{normalize_key, Statement};

/// On-disk knowledge base document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KbFile {
    pub facts: Vec<FactEntry>,
    pub rules: Vec<RuleEntry>,
    pub hypotheses: Vec<HypothesisEntry>,
    pub defaults: Defaults,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidateEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub negations: Vec<NegationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactEntry {
    pub text: Statement,
    pub truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEntry {
    pub premises: Vec<Statement>,
    pub conclusion: Statement,
    pub entail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisEntry {
    pub question: String,
    pub option: String,
    pub hypothesis: Statement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Defaults {
    pub truth: f64,
    pub entail: f64,
}

impl Default for Defaults {
    fn default() -> Self {
        Self { truth: 0.5, entail: 0.0 }
    }
}

/// Stored answers for an open-ended question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub question: String,
    pub answers: Vec<String>,
}

/// Explicit negation pairs, consulted before the rule-based negator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegationEntry {
    pub statement: Statement,
    pub negation: Statement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub premises: Vec<Statement>,
    pub conclusion: Statement,
    pub entail: f64,
    /// Position in the rule file.
    pub index: usize,
}

/// Indexed, read-only view of a [`KbFile`].
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    file: KbFile,
    facts: HashMap<String, f64>,
    rules: Vec<Rule>,
    by_conclusion: HashMap<String, Vec<usize>>,
    entail_index: HashMap<(Vec<String>, String), f64>,
    hypotheses: HashMap<(String, String), Statement>,
    candidates: HashMap<String, Vec<String>>,
    negations: HashMap<String, Statement>,
}

fn kb_err(msg: String) -> BackendError {
    BackendError::KnowledgeBase(msg)
}

fn premise_multiset(premises: &[Statement]) -> Vec<String> {
    let mut keys: Vec<String> = premises.iter().map(|p| p.key().to_string()).collect();
    keys.sort_unstable();
    keys
}

impl KnowledgeBase {
    pub fn new(file: KbFile) -> Result<Self> {
        check_unit("default truth", file.defaults.truth)?;
        check_unit("default entailment", file.defaults.entail)?;

        let mut facts = HashMap::new();
        for fact in &file.facts {
            check_unit("fact truth", fact.truth).map_err(|e| kb_err(format!("fact {:?}: {e}", fact.text.text())))?;
            facts.insert(fact.text.key().to_string(), fact.truth);
        }

        let mut rules = Vec::with_capacity(file.rules.len());
        let mut by_conclusion: HashMap<String, Vec<usize>> = HashMap::new();
        let mut entail_index: HashMap<(Vec<String>, String), f64> = HashMap::new();
        for (index, entry) in file.rules.iter().enumerate() {
            let ctx = |msg: String| kb_err(format!("rule {index}: {msg}"));
            if entry.premises.is_empty() {
                return Err(ctx("empty premise list".into()));
            }
            if entry.premises.iter().any(|p| p.key() == entry.conclusion.key()) {
                return Err(ctx("conclusion appears among its premises".into()));
            }
            check_unit("rule entailment", entry.entail).map_err(|e| ctx(e.to_string()))?;
            let key = (premise_multiset(&entry.premises), entry.conclusion.key().to_string());
            let slot = entail_index.entry(key).or_insert(entry.entail);
            *slot = slot.max(entry.entail);
            by_conclusion.entry(entry.conclusion.key().to_string()).or_default().push(index);
            rules.push(Rule {
                premises: entry.premises.clone(),
                conclusion: entry.conclusion.clone(),
                entail: entry.entail,
                index,
            });
        }

        let hypotheses = file
            .hypotheses
            .iter()
            .map(|h| ((normalize_key(&h.question), normalize_key(&h.option)), h.hypothesis.clone()))
            .collect();
        let candidates = file.candidates.iter().map(|c| (normalize_key(&c.question), c.answers.clone())).collect();
        let mut negations = HashMap::new();
        for n in &file.negations {
            negations.insert(n.statement.key().to_string(), n.negation.clone());
            negations.entry(n.negation.key().to_string()).or_insert_with(|| n.statement.clone());
        }

        Ok(Self { file, facts, rules, by_conclusion, entail_index, hypotheses, candidates, negations })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: KbFile = serde_json::from_str(text).map_err(|e| kb_err(e.to_string()))?;
        Self::new(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| kb_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn file(&self) -> &KbFile {
        &self.file
    }

    pub fn default_truth(&self) -> f64 {
        self.file.defaults.truth
    }

    pub fn default_entail(&self) -> f64 {
        self.file.defaults.entail
    }

    pub fn fact(&self, key: &str) -> Option<f64> {
        self.facts.get(key).copied()
    }

    pub fn truth(&self, key: &str) -> f64 {
        self.fact(key).unwrap_or(self.file.defaults.truth)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Rules concluding `key`, in file order.
    pub fn rules_for(&self, key: &str) -> impl Iterator<Item = &Rule> {
        self.by_conclusion.get(key).into_iter().flatten().map(|&i| &self.rules[i])
    }

    /// Entailment of the rule whose premise multiset and conclusion match
    /// exactly (the best one if several do), else the default.
    pub fn entail_for(&self, premises: &[Statement], conclusion: &Statement) -> f64 {
        self.entail_index
            .get(&(premise_multiset(premises), conclusion.key().to_string()))
            .copied()
            .unwrap_or(self.file.defaults.entail)
    }

    pub fn hypothesis(&self, question: &str, option: &str) -> Option<&Statement> {
        self.hypotheses.get(&(normalize_key(question), normalize_key(option)))
    }

    pub fn candidates(&self, question: &str) -> Option<&[String]> {
        self.candidates.get(&normalize_key(question)).map(Vec::as_slice)
    }

    pub fn negation(&self, statement: &Statement) -> Option<&Statement> {
        self.negations.get(statement.key())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "facts": [{"text": "A paperclip is made of steel.", "truth": 0.995}],
        "rules": [
            {"premises": ["A paperclip is made of steel.", "Steel is a metal."],
             "conclusion": "A paperclip is made of metal.", "entail": 0.998},
            {"premises": ["Steel is a metal.", "A paperclip is made of steel."],
             "conclusion": "A paperclip is made of metal.", "entail": 0.5}
        ],
        "hypotheses": [{"question": "Is the sky", "option": "blue", "hypothesis": "The sky is blue."}],
        "defaults": {"truth": 0.5, "entail": 0.0}
    }"#;

    #[test]
    fn loads_and_indexes() {
        let kb = KnowledgeBase::from_json(SAMPLE).unwrap();
        assert_eq!(kb.truth("a paperclip is made of steel"), 0.995);
        assert_eq!(kb.truth("unknown"), 0.5);
        assert_eq!(kb.rules_for("a paperclip is made of metal").count(), 2);
        let h = Statement::new("A paperclip is made of metal.").unwrap();
        let ps = [Statement::new("steel is a metal").unwrap(), Statement::new("A paperclip is made of steel").unwrap()];
        // premise order does not matter; the best matching rule wins
        assert_eq!(kb.entail_for(&ps, &h), 0.998);
        assert_eq!(kb.entail_for(&ps[..1], &h), 0.0);
        assert_eq!(kb.hypothesis("is the sky?", "Blue").unwrap().text(), "The sky is blue.");
    }

    #[test]
    fn rejects_invalid_documents() {
        for bad in [
            r#"{"facts": [{"text": "A.", "truth": 1.5}]}"#,
            r#"{"rules": [{"premises": [], "conclusion": "A.", "entail": 0.5}]}"#,
            r#"{"rules": [{"premises": ["a"], "conclusion": "A.", "entail": 0.5}]}"#,
            r#"{"defaults": {"truth": 2.0, "entail": 0.0}}"#,
            r#"{"fact": []}"#,
        ] {
            assert!(KnowledgeBase::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn file_round_trips_through_json() {
        let kb = KnowledgeBase::from_json(SAMPLE).unwrap();
        let text = serde_json::to_string(kb.file()).unwrap();
        let again = KnowledgeBase::from_json(&text).unwrap();
        assert_eq!(again.file(), kb.file());
    }
}
