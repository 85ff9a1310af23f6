//! Question-level orchestration: hypotheses per option, the three answer
//! modes, and batch evaluation.

mod dataset;
mod metrics;

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{load_jsonl, parse_jsonl, to_jsonl, DatasetError, QuestionRecord};
pub use metrics::{Metrics, SkippedQuestion};

use crate::backend::{check_distinct, hypothesize_all, Backend, BackendError, Conditioning};
use crate::config::SearchConfig;
use crate::context::Context;
use crate::memory::{context_from_memory, MemoryStore, DEFAULT_CONTEXT_CAP};
use crate::proof::{fixed9, fixed9_opt, ProofNode};
use crate::search::{Search, SearchError};
use crate::statement::{normalize_key, QaPair, Statement};

/// Candidate answers requested for an open-ended question without its own
/// `n_candidates`.
pub const DEFAULT_CANDIDATES: usize = 4;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("question {id:?}: {source}")]
    Backend { id: String, source: BackendError },
    #[error("question {id:?}: every option failed; first error: {source}")]
    AllOptionsFailed { id: String, source: SearchError },
    #[error("cannot evaluate an empty dataset")]
    EmptyDataset,
    #[error("cannot evaluate: question {0:?} has no gold answer")]
    MissingGold(String),
    #[error("evaluation aborted at question {id:?}: {source}")]
    Aborted { id: String, source: Box<PipelineError> },
}

impl PipelineError {
    /// The backend could not be reached; nothing is wrong with the input.
    pub fn is_retryable(&self) -> bool {
        match self {
            PipelineError::Backend { source, .. } => source.is_retryable(),
            PipelineError::AllOptionsFailed { source, .. } => source.is_retryable(),
            PipelineError::Aborted { source, .. } => source.is_retryable(),
            _ => false,
        }
    }

    /// Failures that skip one question of a batch instead of ending it.
    fn skips_question(&self) -> bool {
        match self {
            PipelineError::Dataset(_) => true,
            PipelineError::Backend { source, .. } => {
                matches!(source, BackendError::Declarativization { .. } | BackendError::OpenEndedUnsupported(_))
            }
            _ => false,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerMode {
    /// Argmax of direct scores.
    Direct,
    /// Argmax of proof scores.
    #[default]
    Entailer,
    /// The more confident of the direct and proof-based picks.
    Combined,
}

impl std::str::FromStr for AnswerMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(Self::Direct),
            "entailer" => Ok(Self::Entailer),
            "combined" => Ok(Self::Combined),
            other => Err(format!("unknown mode {other:?}; expected direct, entailer or combined")),
        }
    }
}

impl std::fmt::Display for AnswerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Direct => "direct",
            Self::Entailer => "entailer",
            Self::Combined => "combined",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionResult {
    pub option: String,
    pub hypothesis: Statement,
    #[serde(serialize_with = "fixed9_opt")]
    pub s_d: Option<f64>,
    #[serde(serialize_with = "fixed9_opt")]
    pub c_d: Option<f64>,
    pub proof: Option<ProofNode>,
    /// The value this option competed with in its mode; 0 when it failed.
    #[serde(serialize_with = "fixed9")]
    pub score: f64,
    pub error: Option<String>,
}

/// An option index with the confidence it was picked with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub index: usize,
    #[serde(serialize_with = "fixed9")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResult {
    pub question_id: String,
    pub chosen_index: usize,
    pub chosen_option: String,
    pub mode: AnswerMode,
    pub per_option: Vec<OptionResult>,
    /// The chosen answer is the one with the best proof.
    pub faithful: bool,
    pub direct_pick: Option<Pick>,
    pub entailer_pick: Option<Pick>,
    /// Serialized context every backend call was conditioned on.
    pub context: Option<String>,
    pub gold_index: Option<usize>,
    pub wall_time_ms: u64,
}

impl AnswerResult {
    pub fn chosen(&self) -> &OptionResult {
        &self.per_option[self.chosen_index]
    }

    pub fn correct(&self) -> Option<bool> {
        self.gold_index.map(|g| g == self.chosen_index)
    }
}

/// A question with its options resolved and restated as hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub options: Vec<String>,
    pub hypotheses: Vec<Statement>,
    pub gold_index: Option<usize>,
    /// Two-way yes/no or true/false question answered via a hypothesis and
    /// its negation.
    pub true_false: bool,
}

/// Index of the affirmative option when the options are exactly yes/no or
/// true/false in some order.
fn affirmative_index(options: &[String]) -> Option<usize> {
    let norm: Vec<String> = options.iter().map(|o| normalize_key(o)).collect();
    let [a, b] = norm.as_slice() else { return None };
    [("yes", "no"), ("true", "false")].iter().find_map(|(pos, neg)| match (a.as_str(), b.as_str()) {
        (x, y) if x == *pos && y == *neg => Some(0),
        (x, y) if x == *neg && y == *pos => Some(1),
        _ => None,
    })
}

/// Lowest index among the maxima.
fn argmax(scores: impl IntoIterator<Item = f64>) -> Option<(usize, f64)> {
    scores.into_iter().enumerate().fold(None, |best, (i, s)| match best {
        Some((_, b)) if b >= s => best,
        _ => Some((i, s)),
    })
}

#[derive(Clone)]
pub struct Pipeline {
    backend: Arc<dyn Backend>,
    cfg: SearchConfig,
    n_candidates: usize,
    context_cap: usize,
    condition_on_qa: bool,
}

impl Pipeline {
    pub fn new(backend: Arc<dyn Backend>, cfg: SearchConfig) -> Self {
        Self {
            backend,
            cfg,
            n_candidates: DEFAULT_CANDIDATES,
            context_cap: DEFAULT_CONTEXT_CAP,
            condition_on_qa: false,
        }
    }

    pub fn with_n_candidates(mut self, n: usize) -> Self {
        self.n_candidates = n.max(1);
        self
    }

    pub fn with_context_cap(mut self, cap: usize) -> Self {
        self.context_cap = cap;
        self
    }

    /// Also pass the question and option to every backend call.
    pub fn with_qa_conditioning(mut self, on: bool) -> Self {
        self.condition_on_qa = on;
        self
    }

    pub fn config(&self) -> &SearchConfig {
        &self.cfg
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn prepare(&self, q: &QuestionRecord) -> Result<Prepared> {
        q.validate()?;
        let backend_err = |source| PipelineError::Backend { id: q.id.clone(), source };
        let options = if q.open_ended {
            let n = q.n_candidates.unwrap_or(self.n_candidates);
            let mut c = self.backend.generate_candidates(&q.question, n).map_err(backend_err)?;
            c.truncate(n);
            if c.len() < 2 {
                return Err(backend_err(BackendError::OpenEndedUnsupported(q.question.clone())));
            }
            c
        } else {
            q.options.clone()
        };
        let gold_index = match (&q.gold_text, q.open_ended) {
            (Some(gold), true) => options.iter().position(|o| normalize_key(o) == normalize_key(gold)),
            _ => q.gold_index,
        };

        if let Some(pos) = affirmative_index(&options) {
            let h = self.backend.hypothesize(&QaPair::new(q.question.as_str(), options[pos].as_str(), pos));
            let h = h.map_err(backend_err)?;
            let neg = self.backend.negate(&h).map_err(backend_err)?;
            let hypotheses = if pos == 0 { vec![h, neg] } else { vec![neg, h] };
            check_distinct(&hypotheses).map_err(backend_err)?;
            return Ok(Prepared { options, hypotheses, gold_index, true_false: true });
        }
        let hypotheses = hypothesize_all(self.backend.as_ref(), &q.question, &options).map_err(backend_err)?;
        Ok(Prepared { options, hypotheses, gold_index, true_false: false })
    }

    pub fn answer_direct(&self, q: &QuestionRecord) -> Result<AnswerResult> {
        self.answer(q, AnswerMode::Direct, None)
    }

    pub fn answer_entailer(&self, q: &QuestionRecord) -> Result<AnswerResult> {
        self.answer(q, AnswerMode::Entailer, None)
    }

    pub fn answer_combined(&self, q: &QuestionRecord) -> Result<AnswerResult> {
        self.answer(q, AnswerMode::Combined, None)
    }

    /// Answers with the relevant stored overrides placed in the context.
    pub fn answer_with_memory(
        &self,
        q: &QuestionRecord,
        mode: AnswerMode,
        store: &MemoryStore,
    ) -> Result<AnswerResult> {
        let started = Instant::now();
        let prepared = self.prepare(q)?;
        let assembled = context_from_memory(store, &q.question, &prepared.hypotheses, self.context_cap);
        self.answer_prepared(q, prepared, mode, Some(&assembled.context), started)
    }

    pub fn answer(&self, q: &QuestionRecord, mode: AnswerMode, context: Option<&Context>) -> Result<AnswerResult> {
        let started = Instant::now();
        let prepared = self.prepare(q)?;
        self.answer_prepared(q, prepared, mode, context, started)
    }

    fn answer_prepared(
        &self,
        q: &QuestionRecord,
        prepared: Prepared,
        mode: AnswerMode,
        context: Option<&Context>,
        started: Instant,
    ) -> Result<AnswerResult> {
        let prove = mode != AnswerMode::Direct;
        let outcomes: Vec<(OptionResult, Option<SearchError>)> = prepared
            .options
            .par_iter()
            .zip(prepared.hypotheses.par_iter())
            .enumerate()
            .map(|(i, (option, h))| self.run_option(&q.question, i, option, h, context, prove))
            .collect();
        if let Some(pos) = outcomes.iter().position(|(_, e)| e.is_none()) {
            log::trace!("question {}: option {pos} is the first to succeed", q.id);
        } else {
            let (_, first) = outcomes.into_iter().next().expect("at least two options");
            return Err(PipelineError::AllOptionsFailed { id: q.id.clone(), source: first.expect("failed") });
        }
        let mut per_option: Vec<OptionResult> = outcomes.into_iter().map(|(r, _)| r).collect();

        let direct_pick = argmax(per_option.iter().map(|o| o.s_d.unwrap_or(0.0)))
            .map(|(index, _)| Pick { index, confidence: per_option[index].c_d.unwrap_or(0.0) });
        let entailer_pick = if prove {
            argmax(per_option.iter().map(|o| o.proof.as_ref().map_or(0.0, |p| p.overall)))
                .map(|(index, _)| Pick { index, confidence: per_option[index].proof.as_ref().map_or(0.0, |p| p.c_r) })
        } else {
            None
        };

        let (chosen_index, faithful) = match mode {
            AnswerMode::Direct => (direct_pick.expect("options").index, false),
            AnswerMode::Entailer => (entailer_pick.expect("options").index, true),
            AnswerMode::Combined => {
                let d = direct_pick.expect("options");
                let e = entailer_pick.expect("options");
                let chosen = if d.confidence > e.confidence { d.index } else { e.index };
                (chosen, chosen == e.index)
            }
        };
        for o in &mut per_option {
            o.score = match mode {
                AnswerMode::Direct => o.s_d.unwrap_or(0.0),
                _ => o.proof.as_ref().map_or(0.0, |p| p.overall),
            };
        }

        Ok(AnswerResult {
            question_id: q.id.clone(),
            chosen_option: prepared.options[chosen_index].clone(),
            chosen_index,
            mode,
            per_option,
            faithful,
            direct_pick,
            entailer_pick,
            context: context.map(Context::serialize),
            gold_index: prepared.gold_index,
            wall_time_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn run_option(
        &self,
        question: &str,
        index: usize,
        option: &str,
        hypothesis: &Statement,
        context: Option<&Context>,
        prove: bool,
    ) -> (OptionResult, Option<SearchError>) {
        let qa = QaPair::new(question, option, index);
        let cond = Conditioning::new(self.condition_on_qa.then_some(&qa), context);
        let search = Search::new(self.backend.as_ref(), &self.cfg, cond);
        let mut result = OptionResult {
            option: option.to_string(),
            hypothesis: hypothesis.clone(),
            s_d: None,
            c_d: None,
            proof: None,
            score: 0.0,
            error: None,
        };
        let outcome = search.score_direct(hypothesis).and_then(|s_d| {
            result.s_d = Some(s_d);
            result.c_d = Some(crate::score::direct_confidence(s_d)?);
            if prove {
                result.proof = Some(search.prove_with_direct(hypothesis, s_d)?);
            }
            Ok(())
        });
        match outcome {
            Ok(()) => (result, None),
            Err(e) => {
                log::warn!("option {index} ({option:?}) failed: {e}");
                result.error = Some(e.to_string());
                (result, Some(e))
            }
        }
    }

    /// Answers every question and aggregates metrics. Questions whose
    /// hypotheses cannot be built are skipped and reported; an unreachable
    /// backend aborts the run.
    pub fn evaluate(&self, dataset: &[QuestionRecord], mode: AnswerMode) -> Result<(Metrics, Vec<AnswerResult>)> {
        if dataset.is_empty() {
            return Err(PipelineError::EmptyDataset);
        }
        if let Some(q) = dataset.iter().find(|q| !q.has_gold()) {
            return Err(PipelineError::MissingGold(q.id.clone()));
        }
        let outcomes: Vec<Result<AnswerResult>> = dataset.par_iter().map(|q| self.answer(q, mode, None)).collect();
        let mut results = Vec::with_capacity(dataset.len());
        let mut skipped = Vec::new();
        for (q, outcome) in dataset.iter().zip(outcomes) {
            match outcome {
                Ok(r) => results.push(r),
                Err(e) if e.skips_question() => {
                    log::warn!("skipping question {}: {e}", q.id);
                    skipped.push(SkippedQuestion { id: q.id.clone(), reason: e.to_string() });
                }
                Err(e) => return Err(PipelineError::Aborted { id: q.id.clone(), source: Box::new(e) }),
            }
        }
        Ok((Metrics::compute(mode, dataset.len(), &results, skipped), results))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FactEntry, HypothesisEntry, KbFile, KnowledgeBase, MockBackend, RuleEntry};
    use crate::proof::rescore_tree;

    fn st(s: &str) -> Statement {
        Statement::new(s).unwrap()
    }

    fn fact(text: &str, truth: f64) -> FactEntry {
        FactEntry { text: st(text), truth }
    }

    fn rule(premises: &[&str], conclusion: &str, entail: f64) -> RuleEntry {
        RuleEntry { premises: premises.iter().map(|p| st(p)).collect(), conclusion: st(conclusion), entail }
    }

    fn hyp(question: &str, option: &str, hypothesis: &str) -> HypothesisEntry {
        HypothesisEntry { question: question.into(), option: option.into(), hypothesis: st(hypothesis) }
    }

    fn pipeline(file: KbFile, cfg: SearchConfig) -> Pipeline {
        Pipeline::new(Arc::new(MockBackend::new(KnowledgeBase::new(file).unwrap())), cfg)
    }

    fn mc(options: &[&str]) -> QuestionRecord {
        QuestionRecord::multiple_choice("q", "Which one _?", options.iter().map(|o| o.to_string()).collect(), None)
    }

    #[test]
    fn direct_mode_examples() {
        let file = KbFile {
            facts: vec![
                fact("Which one a?", 0.2),
                fact("Which one b?", 0.9),
                fact("Which one c?", 0.4),
                fact("Which one d?", 0.1),
            ],
            ..Default::default()
        };
        let p = pipeline(file, SearchConfig::default());
        let r = p.answer_direct(&mc(&["a", "b", "c", "d"])).unwrap();
        assert_eq!(r.chosen_index, 1);
        assert!(!r.faithful);
        assert!(r.per_option.iter().all(|o| o.proof.is_none()));

        let file = KbFile { facts: vec![fact("Which one a?", 0.7), fact("Which one b?", 0.7)], ..Default::default() };
        let r = pipeline(file, SearchConfig::default()).answer_direct(&mc(&["a", "b"])).unwrap();
        assert_eq!(r.chosen_index, 0);
    }

    #[test]
    fn entailer_picks_the_only_proof() {
        let file = KbFile {
            facts: vec![fact("X holds.", 1.0), fact("Y holds.", 0.2)],
            rules: vec![rule(&["X holds."], "Which one a?", 1.0), rule(&["Y holds."], "Which one b?", 0.9)],
            ..Default::default()
        };
        let r = pipeline(file, SearchConfig::default()).answer_entailer(&mc(&["b", "a"])).unwrap();
        assert_eq!(r.chosen_index, 1);
        assert!(r.faithful);
        assert_eq!(r.chosen().proof.as_ref().unwrap().overall, 1.0);
        for o in &r.per_option {
            rescore_tree(o.proof.as_ref().unwrap()).unwrap();
        }
        // b only has a forced proof: 0.2 * 0.9
        assert!(r.per_option[0].proof.as_ref().unwrap().forced);
        assert!((r.per_option[0].score - 0.18).abs() < 1e-12);
    }

    #[test]
    fn forced_ties_go_to_the_lowest_index() {
        let file = KbFile {
            facts: vec![fact("P holds.", 0.1), fact("Q holds.", 0.1)],
            rules: vec![rule(&["P holds."], "Which one a?", 1.0), rule(&["Q holds."], "Which one b?", 1.0)],
            ..Default::default()
        };
        let r = pipeline(file, SearchConfig::default()).answer_entailer(&mc(&["a", "b"])).unwrap();
        assert_eq!(r.chosen_index, 0);
        assert!(r.per_option.iter().all(|o| o.proof.as_ref().unwrap().forced && o.score == 0.1));
    }

    #[test]
    fn combined_prefers_the_more_confident_pick() {
        // direct: a has c_d 0.95; proofs: b has proof 0.9
        let file = KbFile {
            facts: vec![fact("Which one a?", 0.95), fact("Which one b?", 0.3), fact("Z holds.", 1.0)],
            rules: vec![rule(&["Z holds."], "Which one b?", 0.9)],
            ..Default::default()
        };
        let cfg = SearchConfig { force_root_proof: false, ..SearchConfig::default() };
        let p = pipeline(file.clone(), cfg);
        let r = p.answer_combined(&mc(&["a", "b"])).unwrap();
        // a has no rules so its proof is a leaf with overall 0.95 and c_r 0;
        // the proof-based pick is therefore a (0.95 > 0.9) and both agree.
        assert_eq!(r.entailer_pick.unwrap().index, 0);
        assert_eq!(r.chosen_index, 0);
        assert!(r.faithful);

        // with forcing, a's forced leaf still scores 0.95 but b is reasoned
        // with c_r 0.9; direct (0.95) beats the proof-based pick (c_r of a is 0).
        let r = pipeline(file, SearchConfig::default()).answer_combined(&mc(&["a", "b"])).unwrap();
        assert_eq!(r.direct_pick.unwrap(), Pick { index: 0, confidence: 0.95 });
        assert_eq!(r.chosen_index, 0);
    }

    #[test]
    fn combined_unfaithful_when_direct_wins() {
        let file = KbFile {
            facts: vec![fact("Which one a?", 0.95), fact("Which one b?", 0.3), fact("Z holds.", 1.0)],
            rules: vec![rule(&["Z holds."], "Which one a?", 0.5), rule(&["Z holds."], "Which one b?", 0.9)],
            ..Default::default()
        };
        let r = pipeline(file, SearchConfig::default()).answer_combined(&mc(&["a", "b"])).unwrap();
        assert_eq!(r.entailer_pick.unwrap().index, 1);
        assert_eq!(r.direct_pick.unwrap().index, 0);
        assert_eq!(r.chosen_index, 0);
        assert!(!r.faithful);
    }

    #[test]
    fn true_false_questions_prove_the_negation() {
        let file = KbFile {
            facts: vec![fact("Ice is cold.", 0.9)],
            rules: vec![
                rule(&["Ice is cold."], "Snow is not warm.", 0.95),
                rule(&["Ice is cold."], "Snow is warm.", 0.6),
            ],
            hypotheses: vec![hyp("Is snow warm?", "yes", "Snow is warm.")],
            ..Default::default()
        };
        let p = pipeline(file, SearchConfig::default());
        let q = QuestionRecord::multiple_choice("tf", "Is snow warm?", vec!["no".into(), "yes".into()], Some(0));
        let prepared = p.prepare(&q).unwrap();
        assert!(prepared.true_false);
        assert_eq!(prepared.hypotheses, vec![st("Snow is not warm."), st("Snow is warm.")]);
        let r = p.answer_entailer(&q).unwrap();
        // no: 0.9 * 0.95 = 0.855 against yes: 0.9 * 0.6 = 0.54
        assert_eq!(r.chosen_index, 0);
        assert_eq!(r.correct(), Some(true));
    }

    #[test]
    fn colliding_hypotheses_fail_the_question() {
        let file = KbFile {
            hypotheses: vec![hyp("Q?", "a", "Same thing."), hyp("Q?", "b", "Same thing.")],
            ..Default::default()
        };
        let p = pipeline(file, SearchConfig::default());
        let q = QuestionRecord::multiple_choice("c", "Q?", vec!["a".into(), "b".into()], Some(0));
        let err = p.answer_entailer(&q).unwrap_err();
        assert!(err.skips_question());
        let (m, results) = p.evaluate(&[q], AnswerMode::Entailer).unwrap();
        assert!(results.is_empty());
        assert_eq!(m.skipped.len(), 1);
    }

    #[test]
    fn open_ended_routes_through_candidates() {
        let kb = KnowledgeBase::from_json(include_str!("../../tests/fixtures/paperclip.json")).unwrap();
        let p = Pipeline::new(Arc::new(MockBackend::new(kb)), SearchConfig::default()).with_n_candidates(3);
        let mut q = QuestionRecord::open("o", "What is a paperclip made of?", None);
        q.gold_text = Some("Steel".into());
        let prepared = p.prepare(&q).unwrap();
        assert_eq!(prepared.options, vec!["steel", "plastic", "wood"]);
        assert_eq!(prepared.gold_index, Some(0));
    }

    #[test]
    fn evaluate_refusals() {
        let p = pipeline(KbFile::default(), SearchConfig::default());
        assert!(matches!(p.evaluate(&[], AnswerMode::Entailer), Err(PipelineError::EmptyDataset)));
        assert!(matches!(p.evaluate(&[mc(&["a", "b"])], AnswerMode::Entailer), Err(PipelineError::MissingGold(_))));
    }

    #[test]
    fn mode_names_parse() {
        for mode in [AnswerMode::Direct, AnswerMode::Entailer, AnswerMode::Combined] {
            assert_eq!(mode.to_string().parse::<AnswerMode>().unwrap(), mode);
        }
        assert!("fast".parse::<AnswerMode>().is_err());
    }
}
