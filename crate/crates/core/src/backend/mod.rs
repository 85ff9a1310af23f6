//! The model interface: premise generation, direct scoring, entailment
//! scoring, hypothesis construction and candidate answers.
//!
//! Two implementations ship with the crate: [`MockBackend`], a deterministic
//! oracle over a JSON knowledge base, and [`RemoteBackend`], an HTTP client
//! speaking the text wire format in [`wire`].

mod kb;
mod mock;
mod remote;
pub mod wire;

use std::collections::HashSet;
use std::sync::Arc;

use thiserror::Error;

pub use kb::{
    CandidateEntry, Defaults, FactEntry, HypothesisEntry, KbFile, KnowledgeBase, NegationEntry, Rule, RuleEntry,
};
pub use mock::{MockBackend, Noise, OVERRIDE_FALSE, OVERRIDE_TRUE};
pub use remote::{
    GenerateRequest, GenerateResponse, RemoteBackend, RemoteConfig, ScoreRequest, ScoreResponse, MAX_SAMPLES,
};

use crate::config::Decoding;
use crate::context::Context;
use crate::error::CoreError;
use crate::statement::{QaPair, Statement};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: usize, message: String },
    #[error("backend rejected the request with status {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("invalid angle request: {0}")]
    InvalidRequest(String),
    #[error("options {first} and {second} both declarativize to {hypothesis:?}")]
    Declarativization { first: usize, second: usize, hypothesis: String },
    #[error("no candidate answers obtainable for open-ended question {0:?}")]
    OpenEndedUnsupported(String),
    #[error("knowledge base: {0}")]
    KnowledgeBase(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl BackendError {
    /// Transport-level failures that a later attempt may not hit.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Unavailable { .. })
    }
}

pub type Result<T, E = BackendError> = std::result::Result<T, E>;

/// The optional question/answer and context inputs every angle accepts.
#[derive(Debug, Clone, Copy, Default)]
pub struct Conditioning<'a> {
    pub qa: Option<&'a QaPair>,
    pub context: Option<&'a Context>,
}

impl<'a> Conditioning<'a> {
    pub fn new(qa: Option<&'a QaPair>, context: Option<&'a Context>) -> Self {
        Self { qa, context }
    }
}

pub trait Backend: Send + Sync {
    fn name(&self) -> String;

    /// Up to `k` distinct candidate premise sets for `hypothesis`.
    fn generate_premises(
        &self,
        hypothesis: &Statement,
        cond: Conditioning<'_>,
        k: usize,
        decoding: &Decoding,
    ) -> Result<Vec<Vec<Statement>>>;

    /// Probability that `statement` is true.
    fn score_direct(&self, statement: &Statement, cond: Conditioning<'_>) -> Result<f64>;

    /// Probability that `premises` validly entail `hypothesis`.
    fn score_entailment(&self, premises: &[Statement], hypothesis: &Statement, cond: Conditioning<'_>) -> Result<f64>;

    /// Restates a question/answer pair as a declarative hypothesis.
    fn hypothesize(&self, qa: &QaPair) -> Result<Statement>;

    /// Candidate answers for an open-ended question.
    fn generate_candidates(&self, question: &str, n: usize) -> Result<Vec<String>>;

    fn negate(&self, statement: &Statement) -> Result<Statement> {
        Ok(statement.negated())
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn generate_premises(
        &self,
        hypothesis: &Statement,
        cond: Conditioning<'_>,
        k: usize,
        decoding: &Decoding,
    ) -> Result<Vec<Vec<Statement>>> {
        (**self).generate_premises(hypothesis, cond, k, decoding)
    }
    fn score_direct(&self, statement: &Statement, cond: Conditioning<'_>) -> Result<f64> {
        (**self).score_direct(statement, cond)
    }
    fn score_entailment(&self, premises: &[Statement], hypothesis: &Statement, cond: Conditioning<'_>) -> Result<f64> {
        (**self).score_entailment(premises, hypothesis, cond)
    }
    fn hypothesize(&self, qa: &QaPair) -> Result<Statement> {
        (**self).hypothesize(qa)
    }
    fn generate_candidates(&self, question: &str, n: usize) -> Result<Vec<String>> {
        (**self).generate_candidates(question, n)
    }
    fn negate(&self, statement: &Statement) -> Result<Statement> {
        (**self).negate(statement)
    }
}

/// Declarativizes every option of one question, failing the question when
/// two options collapse onto the same hypothesis.
pub fn hypothesize_all(backend: &dyn Backend, question: &str, options: &[String]) -> Result<Vec<Statement>> {
    let hypotheses = options
        .iter()
        .enumerate()
        .map(|(i, option)| backend.hypothesize(&QaPair::new(question, option.as_str(), i)))
        .collect::<Result<Vec<_>>>()?;
    check_distinct(&hypotheses)?;
    Ok(hypotheses)
}

pub(crate) fn check_distinct(hypotheses: &[Statement]) -> Result<()> {
    for (second, h) in hypotheses.iter().enumerate() {
        if let Some(first) = hypotheses[..second].iter().position(|o| o.key() == h.key()) {
            return Err(BackendError::Declarativization { first, second, hypothesis: h.text().to_string() });
        }
    }
    Ok(())
}

/// Drops empty sets, sets containing the hypothesis itself and duplicate
/// sets (compared as sets of keys), then keeps the first `k`.
pub fn dedupe_premise_sets(sets: Vec<Vec<Statement>>, hypothesis: &Statement, k: usize) -> Vec<Vec<Statement>> {
    let mut seen = HashSet::new();
    sets.into_iter()
        .filter(|set| !set.is_empty() && set.iter().all(|p| p.key() != hypothesis.key()))
        .filter(|set| {
            let mut keys: Vec<&str> = set.iter().map(Statement::key).collect();
            keys.sort_unstable();
            keys.dedup();
            seen.insert(keys.join("\u{1f}"))
        })
        .take(k)
        .collect()
}

/// Which model behavior a request asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Angle {
    Premises,
    Direct,
    Entailment,
    Hypothesize,
    Candidates,
}

/// A fully specified request for one angle, as sent over the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleRequest {
    pub angle: Angle,
    pub hypothesis: Option<Statement>,
    pub premises: Option<Vec<Statement>>,
    pub qa: Option<QaPair>,
    pub context: Option<Context>,
    pub n_samples: usize,
    pub decoding: Decoding,
}

impl AngleRequest {
    fn base(angle: Angle, cond: Conditioning<'_>) -> Self {
        Self {
            angle,
            hypothesis: None,
            premises: None,
            qa: cond.qa.cloned(),
            context: cond.context.cloned(),
            n_samples: 1,
            decoding: Decoding::default(),
        }
    }

    pub fn premises(hypothesis: &Statement, cond: Conditioning<'_>, n_samples: usize, decoding: Decoding) -> Self {
        Self { hypothesis: Some(hypothesis.clone()), n_samples, decoding, ..Self::base(Angle::Premises, cond) }
    }

    pub fn direct(statement: &Statement, cond: Conditioning<'_>) -> Self {
        Self { hypothesis: Some(statement.clone()), ..Self::base(Angle::Direct, cond) }
    }

    pub fn entailment(premises: &[Statement], hypothesis: &Statement, cond: Conditioning<'_>) -> Self {
        Self {
            hypothesis: Some(hypothesis.clone()),
            premises: Some(premises.to_vec()),
            ..Self::base(Angle::Entailment, cond)
        }
    }

    pub fn hypothesize(qa: &QaPair) -> Self {
        Self { qa: Some(qa.clone()), context: None, ..Self::base(Angle::Hypothesize, Conditioning::default()) }
    }

    /// Candidate generation carries the bare question with an empty answer.
    pub fn candidates(question: &str, n_samples: usize, decoding: Decoding) -> Self {
        Self {
            qa: Some(QaPair::new(question, "", 0)),
            n_samples,
            decoding,
            ..Self::base(Angle::Candidates, Conditioning::default())
        }
    }

    pub fn validate(&self) -> Result<()> {
        let missing = |what: &str| Err(BackendError::InvalidRequest(format!("{:?} angle requires {what}", self.angle)));
        if self.n_samples < 1 {
            return Err(BackendError::InvalidRequest("n_samples must be at least 1".into()));
        }
        match self.angle {
            Angle::Premises | Angle::Direct if self.hypothesis.is_none() => missing("a hypothesis"),
            Angle::Entailment if self.hypothesis.is_none() => missing("a hypothesis"),
            Angle::Entailment if self.premises.as_ref().is_none_or(Vec::is_empty) => missing("premises"),
            Angle::Hypothesize | Angle::Candidates if self.qa.is_none() => missing("a question"),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(s: &str) -> Statement {
        Statement::new(s).unwrap()
    }

    #[test]
    fn dedupe_removes_self_reference_and_duplicate_sets() {
        let h = st("A paperclip is made of metal.");
        let sets = vec![
            vec![st("A paperclip is made of steel."), st("Steel is a metal.")],
            vec![st("steel is a metal"), st("A paperclip is made of steel.")],
            vec![st("A paperclip is made of metal."), st("Metal is hard.")],
            vec![],
            vec![st("Paperclips are metallic.")],
            vec![st("Wire is metal.")],
        ];
        let out = dedupe_premise_sets(sets, &h, 2);
        assert_eq!(out.len(), 2);
        assert_eq!(out[1], vec![st("Paperclips are metallic.")]);
    }

    #[test]
    fn request_validation() {
        let h = st("X is y.");
        assert!(AngleRequest::direct(&h, Conditioning::default()).validate().is_ok());
        let mut bad = AngleRequest::entailment(&[st("A.")], &h, Conditioning::default());
        bad.premises = Some(vec![]);
        assert!(bad.validate().is_err());
        let mut bad = AngleRequest::direct(&h, Conditioning::default());
        bad.hypothesis = None;
        assert!(bad.validate().is_err());
        let mut bad = AngleRequest::hypothesize(&QaPair::new("Is the sky", "blue", 0));
        bad.qa = None;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn only_transport_failures_are_retryable() {
        assert!(BackendError::Unavailable { attempts: 3, message: "x".into() }.is_retryable());
        assert!(!BackendError::Rejected { status: 400, message: "x".into() }.is_retryable());
        assert!(!BackendError::Protocol("x".into()).is_retryable());
    }
}
