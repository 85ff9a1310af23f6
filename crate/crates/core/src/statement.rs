//! Natural-language statements and their identity keys.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CoreError, Result};

/// A declarative sentence: a hypothesis, a premise, or a stored belief.
///
/// The text is trimmed, internal whitespace is collapsed to single spaces and
/// exactly one terminal period is kept. Two statements denote the same belief
/// iff their [`Statement::key`]s are equal.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Statement {
    text: String,
    key: String,
}

impl Statement {
    pub fn new(text: impl AsRef<str>) -> Result<Self> {
        let collapsed = text.as_ref().split_whitespace().collect::<Vec<_>>().join(" ");
        let body = collapsed.trim_end_matches(|c: char| c == '.' || c.is_whitespace());
        let key = normalize_key(body);
        if key.is_empty() {
            return Err(CoreError::EmptyStatement);
        }
        Ok(Self { text: format!("{body}."), key })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Lowercased, punctuation-stripped, whitespace-collapsed identity key.
    pub fn key(&self) -> &str {
        &self.key
    }

    /// Splits the statement into a negation-free base key and a polarity.
    pub fn polarity(&self) -> Polarity {
        polarity_of_key(&self.key)
    }

    /// Rule-based negation: toggles the first auxiliary's `not`, or falls
    /// back to an "It is not true that ..." wrapper.
    pub fn negated(&self) -> Statement {
        Statement::new(negate_text(self.text())).expect("negation of a non-empty statement")
    }
}

impl fmt::Debug for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.text)
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for Statement {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Statement {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Statement::new(text).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<&str> for Statement {
    type Error = CoreError;

    fn try_from(value: &str) -> Result<Self> {
        Statement::new(value)
    }
}

pub fn normalize_key(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else if c.is_alphanumeric() {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// Negation-free identity of a statement plus whether it is negated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polarity {
    pub base: String,
    pub negated: bool,
}

const NEGATED_AUX: &[(&str, &str)] = &[
    ("cannot", "can"),
    ("cant", "can"),
    ("isnt", "is"),
    ("arent", "are"),
    ("wasnt", "was"),
    ("werent", "were"),
    ("doesnt", "does"),
    ("dont", "do"),
    ("didnt", "did"),
    ("wont", "will"),
    ("hasnt", "has"),
    ("havent", "have"),
];

const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "can", "will", "does", "do", "did", "has", "have", "should", "could", "would", "may",
    "might", "must",
];

const WRAPPER: &str = "it is not true that";

fn polarity_of_key(key: &str) -> Polarity {
    let mut negated = false;
    let mut rest = key;
    if let Some(stripped) = rest.strip_prefix(WRAPPER) {
        if stripped.is_empty() || stripped.starts_with(' ') {
            negated = true;
            rest = stripped.trim_start();
        }
    }
    let mut tokens = Vec::new();
    for token in rest.split(' ').filter(|t| !t.is_empty()) {
        if token == "not" {
            negated = !negated;
        } else if let Some((_, aux)) = NEGATED_AUX.iter().find(|(neg, _)| *neg == token) {
            negated = !negated;
            tokens.push(*aux);
        } else {
            tokens.push(token);
        }
    }
    Polarity { base: tokens.join(" "), negated }
}

/// Toggles the polarity of an English sentence with a small rule set.
pub fn negate_text(text: &str) -> String {
    let body = text.trim().trim_end_matches('.');
    if let Some(rest) = strip_wrapper(body) {
        return format!("{}.", capitalize(rest));
    }
    let words: Vec<&str> = body.split(' ').collect();
    for (i, word) in words.iter().enumerate() {
        let lower = word.to_lowercase();
        if lower == "cannot" {
            return rebuild(&words, i, &[&restore_case(word, "can")]);
        }
        if lower == "not" && i > 0 {
            let mut kept = words.clone();
            kept.remove(i);
            return format!("{}.", kept.join(" "));
        }
        if AUXILIARIES.contains(&lower.as_str()) && i > 0 {
            if words.get(i + 1).is_some_and(|w| w.eq_ignore_ascii_case("not")) {
                let mut kept = words.clone();
                kept.remove(i + 1);
                return format!("{}.", kept.join(" "));
            }
            if lower == "can" {
                return rebuild(&words, i, &[&restore_case(word, "cannot")]);
            }
            return rebuild(&words, i, &[word, "not"]);
        }
    }
    format!("It is not true that {}.", decapitalize(body))
}

fn rebuild(words: &[&str], at: usize, replacement: &[&str]) -> String {
    let mut out: Vec<&str> = words[..at].to_vec();
    out.extend_from_slice(replacement);
    out.extend_from_slice(&words[at + 1..]);
    format!("{}.", out.join(" "))
}

fn restore_case(original: &str, replacement: &str) -> String {
    if original.chars().next().is_some_and(char::is_uppercase) {
        capitalize(replacement)
    } else {
        replacement.to_string()
    }
}

fn strip_wrapper(body: &str) -> Option<&str> {
    let prefix = "It is not true that ";
    match body.get(..prefix.len()) {
        Some(head) if body.len() > prefix.len() && head.eq_ignore_ascii_case(prefix) => Some(&body[prefix.len()..]),
        _ => None,
    }
}

pub(crate) fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn decapitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        // Leave acronyms ("NASA ...") alone.
        Some(first) if !chars.clone().next().is_some_and(char::is_uppercase) => {
            first.to_lowercase().chain(chars).collect()
        }
        _ => s.to_string(),
    }
}

/// A question paired with one of its answer options.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer_option: String,
    pub option_index: usize,
}

impl QaPair {
    pub fn new(question: impl Into<String>, answer_option: impl Into<String>, option_index: usize) -> Self {
        Self { question: question.into(), answer_option: answer_option.into(), option_index }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enforces_single_terminal_period() {
        let s = Statement::new("  A paperclip   is made of steel...  ").unwrap();
        assert_eq!(s.text(), "A paperclip is made of steel.");
        assert_eq!(s.key(), "a paperclip is made of steel");
        assert_eq!(Statement::new("Steel is a metal").unwrap().text(), "Steel is a metal.");
    }

    #[test]
    fn rejects_empty() {
        assert_eq!(Statement::new("   ").unwrap_err(), CoreError::EmptyStatement);
        assert_eq!(Statement::new("...").unwrap_err(), CoreError::EmptyStatement);
        assert_eq!(Statement::new("!?").unwrap_err(), CoreError::EmptyStatement);
    }

    #[test]
    fn key_ignores_case_punctuation_and_spacing() {
        let a = Statement::new("Copper is magnetic.").unwrap();
        let b = Statement::new("copper  IS, magnetic").unwrap();
        assert_eq!(a.key(), b.key());
        assert_ne!(a.key(), Statement::new("Copper is not magnetic.").unwrap().key());
    }

    #[test]
    fn polarity_pairs_statements_with_their_negations() {
        let pos = Statement::new("Copper is magnetic.").unwrap().polarity();
        let neg = Statement::new("Copper is not magnetic.").unwrap().polarity();
        assert_eq!(pos.base, neg.base);
        assert!(!pos.negated);
        assert!(neg.negated);

        let cannot = Statement::new("A magnet cannot attract a penny.").unwrap().polarity();
        let can = Statement::new("A magnet can attract a penny.").unwrap().polarity();
        assert_eq!(cannot.base, can.base);
        assert!(cannot.negated && !can.negated);

        let isnt = Statement::new("Copper isn't magnetic.").unwrap().polarity();
        assert_eq!(isnt, neg);
    }

    #[test]
    fn negation_rules() {
        assert_eq!(negate_text("Copper is magnetic."), "Copper is not magnetic.");
        assert_eq!(negate_text("Copper is not magnetic."), "Copper is magnetic.");
        assert_eq!(negate_text("A magnet can attract a penny."), "A magnet cannot attract a penny.");
        assert_eq!(negate_text("A magnet cannot attract a penny."), "A magnet can attract a penny.");
        assert_eq!(negate_text("Plants need sunlight."), "It is not true that plants need sunlight.");
        assert_eq!(negate_text("It is not true that plants need sunlight."), "Plants need sunlight.");
    }

    #[test]
    fn negation_is_an_involution_on_polarity() {
        for text in ["Copper is magnetic.", "A magnet can attract a penny.", "Plants need sunlight."] {
            let s = Statement::new(text).unwrap();
            let n = s.negated();
            assert_eq!(s.polarity().base, n.polarity().base, "{text}");
            assert_ne!(s.polarity().negated, n.polarity().negated, "{text}");
            assert_eq!(n.negated(), s, "{text}");
        }
    }

    #[test]
    fn serde_uses_plain_text() {
        let s = Statement::new("Steel is a metal.").unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "\"Steel is a metal.\"");
        assert_eq!(serde_json::from_str::<Statement>(&json).unwrap(), s);
        assert!(serde_json::from_str::<Statement>("\"  \"").is_err());
    }
}
