//! Generators and an independent reference prover used by the property and
//! acceptance tests and the benchmarks.

mod fuzz;
mod oracle;
mod questions;

pub use fuzz::{fuzz_case, random_layered_kb, FuzzCase, LayeredKb};
pub use oracle::{all_tree_scores, brute_force_optimum, OracleParams};
pub use questions::{question_set, GeneratedQuestion, QuestionSet};

use rand::Rng;

use crate::statement::Statement;

/// Uniform value on the grid `lo, lo + 0.001, ..., hi` (given in thousandths).
pub(crate) fn milli(rng: &mut impl Rng, lo: u32, hi: u32) -> f64 {
    f64::from(rng.random_range(lo..=hi)) / 1000.0
}

pub(crate) fn st(text: &str) -> Statement {
    Statement::new(text).expect("generated statements are non-empty")
}
