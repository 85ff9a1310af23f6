//! Overgenerate-and-filter step generation and the recursive backward
//! chainer built on it.

use rayon::prelude::*;
use thiserror::Error;

use crate::backend::{Backend, BackendError, Conditioning};
use crate::config::{SearchConfig, Selection};
use crate::error::CoreError;
use crate::proof::{EntailmentStep, ProofNode};
use crate::score::{direct_confidence, node_overall, one_step_score, quantize, Branch};
use crate::statement::Statement;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl SearchError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, SearchError::Backend(e) if e.is_retryable())
    }
}

pub type Result<T, E = SearchError> = std::result::Result<T, E>;

/// A generated step with the scores used to judge it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub step: EntailmentStep,
    /// Direct scores of the premises, aligned with `step.premises()`.
    pub premise_scores: Vec<f64>,
    pub s_r_1deep: f64,
    /// Some premise score or the entailment score fell below the threshold.
    pub filtered: bool,
}

/// Earliest candidate with the strictly highest one-deep score.
fn best_one_deep<'c>(candidates: impl IntoIterator<Item = &'c ScoredCandidate>) -> Option<&'c ScoredCandidate> {
    candidates.into_iter().fold(None, |best, c| match best {
        Some(b) if b.s_r_1deep >= c.s_r_1deep => Some(b),
        _ => Some(c),
    })
}

/// One proof search over a fixed backend, configuration and conditioning.
/// Every backend score is snapped with [`quantize`] on arrival.
#[derive(Clone, Copy)]
pub struct Search<'a> {
    backend: &'a dyn Backend,
    cfg: &'a SearchConfig,
    cond: Conditioning<'a>,
}

impl<'a> Search<'a> {
    pub fn new(backend: &'a dyn Backend, cfg: &'a SearchConfig, cond: Conditioning<'a>) -> Self {
        Self { backend, cfg, cond }
    }

    pub fn score_direct(&self, statement: &Statement) -> Result<f64> {
        Ok(quantize(self.backend.score_direct(statement, self.cond)?))
    }

    /// Samples `k` premise sets and scores every premise and entailment.
    pub fn score_candidates(&self, hypothesis: &Statement, k: usize) -> Result<Vec<ScoredCandidate>> {
        let sets = self.backend.generate_premises(hypothesis, self.cond, k, &self.cfg.decoding())?;
        sets.into_par_iter()
            .map(|premises| {
                let premise_scores = premises.iter().map(|p| self.score_direct(p)).collect::<Result<Vec<_>>>()?;
                let s_e = quantize(self.backend.score_entailment(&premises, hypothesis, self.cond)?);
                let s_r_1deep = one_step_score(&premise_scores, s_e)?;
                let threshold = self.cfg.filter_threshold;
                let filtered = s_e < threshold || premise_scores.iter().any(|&s| s < threshold);
                let step = EntailmentStep::new(premises, hypothesis.clone(), s_e)?;
                Ok(ScoredCandidate { step, premise_scores, s_r_1deep, filtered })
            })
            .collect()
    }

    /// The best unfiltered candidate among `k` samples, if any survives.
    pub fn generate_step(&self, hypothesis: &Statement, k: usize) -> Result<Option<ScoredCandidate>> {
        let candidates = self.score_candidates(hypothesis, k)?;
        Ok(best_one_deep(candidates.iter().filter(|c| !c.filtered)).cloned())
    }

    /// Proves `hypothesis` as a top-level hypothesis with at most
    /// `depth_budget` entailment steps on any path.
    pub fn prove(&self, hypothesis: &Statement, depth_budget: usize) -> Result<ProofNode> {
        self.check_budget(depth_budget)?;
        self.node(hypothesis, None, depth_budget, true)
    }

    /// Like [`Search::prove`] with `max_depth` budget and an already known
    /// direct score for the hypothesis.
    pub fn prove_with_direct(&self, hypothesis: &Statement, s_d: f64) -> Result<ProofNode> {
        self.check_budget(self.cfg.max_depth)?;
        self.node(hypothesis, Some(s_d), self.cfg.max_depth, true)
    }

    fn check_budget(&self, depth_budget: usize) -> Result<()> {
        self.cfg.validate()?;
        if depth_budget < 1 || depth_budget > self.cfg.max_depth {
            return Err(CoreError::InvalidConfig(format!(
                "depth budget {depth_budget} outside 1..={}",
                self.cfg.max_depth
            ))
            .into());
        }
        Ok(())
    }

    fn node(&self, hypothesis: &Statement, known_s_d: Option<f64>, budget: usize, is_root: bool) -> Result<ProofNode> {
        let s_d = match known_s_d {
            Some(s) => s,
            None => self.score_direct(hypothesis)?,
        };
        let c_d = direct_confidence(s_d)?;
        let leaf = || ProofNode::leaf(hypothesis.clone(), s_d);
        if budget == 0 {
            return Ok(leaf()?);
        }

        let force = is_root && self.cfg.force_root_proof;
        let k = if is_root { self.cfg.k_root } else { self.cfg.k_inner };
        let candidates = self.score_candidates(hypothesis, k)?;
        let survivors: Vec<&ScoredCandidate> = candidates.iter().filter(|c| !c.filtered).collect();
        let (pool, forced) = if !survivors.is_empty() {
            (survivors, false)
        } else if force && !candidates.is_empty() {
            log::debug!("no candidate for {hypothesis} passed the filter; forcing the best one");
            (candidates.iter().collect(), true)
        } else {
            let mut node = leaf()?;
            node.forced = force;
            return Ok(node);
        };

        // Expand only when the entailment score alone could beat the direct
        // confidence, except at a forced root.
        let worth_expanding = |c: &ScoredCandidate| force || c.step.s_e() > c_d;
        let best = match self.cfg.selection {
            Selection::OneDeep => {
                let chosen = best_one_deep(pool).expect("non-empty pool");
                if worth_expanding(chosen) {
                    Some(self.expand(hypothesis, s_d, chosen, budget, forced)?)
                } else {
                    None
                }
            }
            Selection::Exhaustive => {
                let mut best: Option<ProofNode> = None;
                for candidate in pool.into_iter().filter(|c| worth_expanding(c)) {
                    let node = self.expand(hypothesis, s_d, candidate, budget, forced)?;
                    if best.as_ref().is_none_or(|b| node.s_r > b.s_r) {
                        best = Some(node);
                    }
                }
                best
            }
        };

        match best {
            Some(node) if force => Ok(node),
            Some(node) if node_overall(s_d, node.s_r)?.1 == Branch::Reasoned => Ok(node),
            // Direct wins: the subtree is discarded and the node becomes a leaf.
            _ => Ok(leaf()?),
        }
    }

    fn expand(
        &self,
        hypothesis: &Statement,
        s_d: f64,
        candidate: &ScoredCandidate,
        budget: usize,
        forced: bool,
    ) -> Result<ProofNode> {
        let children = candidate
            .step
            .premises()
            .par_iter()
            .zip(&candidate.premise_scores)
            .map(|(premise, &score)| self.node(premise, Some(score), budget - 1, false))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProofNode::reasoned(hypothesis.clone(), s_d, candidate.step.clone(), children, forced)?)
    }
}
