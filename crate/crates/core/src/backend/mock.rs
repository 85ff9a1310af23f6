//! Deterministic knowledge-base oracle standing in for a trained model.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{check_distinct, dedupe_premise_sets, Backend, BackendError, Conditioning, KnowledgeBase, Result};
use crate::config::Decoding;
use crate::context::Context;
use crate::statement::{capitalize, QaPair, Statement};

/// Direct score for a statement asserted in the high context bucket.
pub const OVERRIDE_TRUE: f64 = 0.99;
/// Direct score for a statement whose negation is in the high bucket.
pub const OVERRIDE_FALSE: f64 = 0.01;

/// Zero-mean uniform perturbation of knowledge-base scores, clamped to
/// `[0, 1]` and keyed on `(seed, angle, statement)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Noise {
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    kb: Arc<KnowledgeBase>,
    noise: Option<Noise>,
}

pub(crate) fn stable_seed(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Direct score forced by a matching statement in the high context bucket.
pub(crate) fn context_override(statement: &Statement, context: Option<&Context>) -> Option<f64> {
    let target = statement.polarity();
    context?.high().iter().find_map(|s| {
        let p = s.polarity();
        (p.base == target.base).then_some(if p.negated == target.negated { OVERRIDE_TRUE } else { OVERRIDE_FALSE })
    })
}

const AUX_OPENERS: &[&str] = &["is", "are", "was", "were", "can", "will", "does", "do", "did", "has", "have"];

/// Template declarativization used when the hypothesis table has no entry.
///
/// * a blank (`_`) in the question is filled with the option;
/// * an auxiliary-led stem ("Is the sky") becomes "<rest> <aux> <option>";
/// * otherwise the option is appended to the stem.
pub fn template_hypothesis(question: &str, option: &str) -> String {
    let stem = question.trim().trim_end_matches(['?', '.']).trim();
    let option = option.trim().trim_end_matches('.');
    if let Some(at) = stem.find('_') {
        let end = stem[at..].find(|c| c != '_').map_or(stem.len(), |i| at + i);
        return capitalize(&format!("{}{}{}", &stem[..at], option, &stem[end..]));
    }
    if let Some((first, rest)) = stem.split_once(' ') {
        let aux = first.to_lowercase();
        let is_yes_no = ["yes", "no", "true", "false"].contains(&option.to_lowercase().as_str());
        if AUX_OPENERS.contains(&aux.as_str()) && !is_yes_no {
            return capitalize(&format!("{rest} {aux} {option}"));
        }
    }
    capitalize(&format!("{stem} {option}"))
}

impl MockBackend {
    pub fn new(kb: KnowledgeBase) -> Self {
        Self { kb: Arc::new(kb), noise: None }
    }

    pub fn with_noise(mut self, noise: Noise) -> Self {
        self.noise = (noise.amplitude > 0.0).then_some(noise);
        self
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }

    fn perturb(&self, angle: &str, key: &str, value: f64) -> f64 {
        let Some(noise) = self.noise else { return value };
        let mut rng =
            ChaCha8Rng::seed_from_u64(stable_seed(&[&noise.seed.to_le_bytes(), angle.as_bytes(), key.as_bytes()]));
        let delta: f64 = rng.random_range(-noise.amplitude..=noise.amplitude);
        (value + delta).clamp(0.0, 1.0)
    }
}

impl Backend for MockBackend {
    fn name(&self) -> String {
        "mock".into()
    }

    /// Rules concluding the hypothesis, best entailment first. Rules with
    /// equal entailment keep file order under seed 0; any other seed
    /// permutes them deterministically.
    fn generate_premises(
        &self,
        hypothesis: &Statement,
        _cond: Conditioning<'_>,
        k: usize,
        decoding: &Decoding,
    ) -> Result<Vec<Vec<Statement>>> {
        let mut rules: Vec<_> = self.kb.rules_for(hypothesis.key()).collect();
        rules.sort_by(|a, b| b.entail.total_cmp(&a.entail));
        if decoding.seed != 0 {
            let mut rng =
                ChaCha8Rng::seed_from_u64(stable_seed(&[&decoding.seed.to_le_bytes(), hypothesis.key().as_bytes()]));
            for group in rules.chunk_by_mut(|a, b| a.entail == b.entail) {
                group.shuffle(&mut rng);
            }
        }
        let sets = rules.into_iter().map(|r| r.premises.clone()).collect();
        Ok(dedupe_premise_sets(sets, hypothesis, k))
    }

    fn score_direct(&self, statement: &Statement, cond: Conditioning<'_>) -> Result<f64> {
        if let Some(forced) = context_override(statement, cond.context) {
            return Ok(forced);
        }
        Ok(self.perturb("direct", statement.key(), self.kb.truth(statement.key())))
    }

    fn score_entailment(&self, premises: &[Statement], hypothesis: &Statement, _cond: Conditioning<'_>) -> Result<f64> {
        if premises.is_empty() {
            return Err(BackendError::InvalidRequest("entailment needs at least one premise".into()));
        }
        let raw = self.kb.entail_for(premises, hypothesis);
        let mut keys: Vec<&str> = premises.iter().map(Statement::key).collect();
        keys.sort_unstable();
        Ok(self.perturb("entail", &format!("{}=>{}", keys.join("|"), hypothesis.key()), raw))
    }

    fn hypothesize(&self, qa: &QaPair) -> Result<Statement> {
        if let Some(h) = self.kb.hypothesis(&qa.question, &qa.answer_option) {
            return Ok(h.clone());
        }
        Ok(Statement::new(template_hypothesis(&qa.question, &qa.answer_option))?)
    }

    fn generate_candidates(&self, question: &str, n: usize) -> Result<Vec<String>> {
        let stored = self.kb.candidates(question).unwrap_or_default();
        let mut out: Vec<String> = Vec::new();
        let mut seen = Vec::new();
        for answer in stored {
            let key = crate::statement::normalize_key(answer);
            if key.is_empty() || seen.contains(&key) {
                continue;
            }
            seen.push(key);
            out.push(answer.trim().to_string());
            if out.len() == n {
                break;
            }
        }
        if out.is_empty() {
            return Err(BackendError::OpenEndedUnsupported(question.to_string()));
        }
        Ok(out)
    }

    fn negate(&self, statement: &Statement) -> Result<Statement> {
        let negation = self.kb.negation(statement).cloned().unwrap_or_else(|| statement.negated());
        check_distinct(&[statement.clone(), negation.clone()])?;
        Ok(negation)
    }
}
