//! Backward-chaining entailment proof search.
//!
//! A question's answer options are restated as hypotheses; each hypothesis
//! is proved by recursively asking a [`backend::Backend`] for premises that
//! entail it, verifying those premises and the entailment with the same
//! backend, and keeping the best-scoring tree. The answer with the best proof
//! wins.

pub mod backend;
pub mod config;
pub mod context;
pub mod error;
pub mod memory;
pub mod pipeline;
pub mod proof;
pub mod score;
pub mod search;
pub mod statement;

#[cfg(feature = "testkit")]
pub mod testkit;

pub use config::{Decoding, SearchConfig, Selection};
pub use context::Context;
pub use error::CoreError;
pub use proof::{rescore_tree, EntailmentStep, ProofNode};
pub use score::{direct_confidence, node_overall, one_step_score, Branch};
pub use statement::{QaPair, Statement};
