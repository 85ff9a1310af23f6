use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Sample count meaning "every candidate the backend can enumerate".
pub const ALL_CANDIDATES: usize = usize::MAX;

/// How a node picks among its surviving candidate steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Keep the candidate with the best one-deep score, then expand it.
    #[default]
    OneDeep,
    /// Expand every surviving candidate and keep the one whose full subtree
    /// scores best. Exponential; meant for small knowledge bases.
    Exhaustive,
}

/// Sampling parameters forwarded to the backend untouched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
}

impl Default for Decoding {
    fn default() -> Self {
        Self { temperature: 2.0, top_p: 0.95, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Maximum number of entailment steps on any root-to-leaf path.
    pub max_depth: usize,
    /// Premise sets sampled for the top-level hypothesis.
    pub k_root: usize,
    /// Premise sets sampled for every other node.
    pub k_inner: usize,
    pub filter_threshold: f64,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
    /// Always return a reasoned root when any candidate step exists.
    pub force_root_proof: bool,
    pub selection: Selection,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            k_root: 6,
            k_inner: 1,
            filter_threshold: 0.5,
            temperature: 2.0,
            top_p: 0.95,
            seed: 0,
            force_root_proof: true,
            selection: Selection::OneDeep,
        }
    }
}

impl SearchConfig {
    /// Enumerates every candidate at every node and keeps the best subtree.
    pub fn exhaustive(max_depth: usize) -> Self {
        Self {
            max_depth,
            k_root: ALL_CANDIDATES,
            k_inner: ALL_CANDIDATES,
            selection: Selection::Exhaustive,
            ..Self::default()
        }
    }

    pub fn decoding(&self) -> Decoding {
        Decoding { temperature: self.temperature, top_p: self.top_p, seed: self.seed }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CoreError::InvalidConfig(msg));
        if self.max_depth < 1 {
            return fail("max_depth must be at least 1".into());
        }
        if self.k_root < 1 || self.k_inner < 1 {
            return fail("k_root and k_inner must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.filter_threshold) {
            return fail(format!("filter_threshold {} not in [0, 1]", self.filter_threshold));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature {} must be positive", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return fail(format!("top_p {} not in (0, 1]", self.top_p));
        }
        Ok(())
    }
}
