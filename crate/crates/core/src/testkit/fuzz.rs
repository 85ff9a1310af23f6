use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::{milli, st};
use crate::backend::{FactEntry, KbFile, RuleEntry};
use crate::config::{SearchConfig, Selection};
use crate::statement::Statement;

/// A random knowledge base whose rules only point from one layer to the
/// next, so every proof of the goal is at most `layers - 1` steps deep.
#[derive(Debug, Clone)]
pub struct LayeredKb {
    pub file: KbFile,
    pub goal: Statement,
}

/// At most `max_rules` rules over four layers (goal plus three below it).
/// Scores sit on a 0.01 grid, so filter-threshold equality and score ties
/// occur regularly.
pub fn random_layered_kb(rng: &mut impl Rng, max_rules: usize) -> LayeredKb {
    let mut layers: Vec<Vec<Statement>> = vec![vec![st("Goal holds.")]];
    for level in 1..=3 {
        let width = rng.random_range(1..=3);
        layers.push((0..width).map(|j| st(&format!("Fact {level}-{j} holds."))).collect());
    }
    let mut facts = Vec::new();
    for s in layers.iter().flatten() {
        // some statements stay at the default truth
        if rng.random_bool(0.85) {
            facts.push(FactEntry { text: s.clone(), truth: grid(rng) });
        }
    }
    let n_rules = rng.random_range(1..=max_rules.max(1));
    let mut rules = Vec::with_capacity(n_rules);
    for i in 0..n_rules {
        // bias toward the top so the goal usually has candidates
        let level = if i == 0 { 0 } else { rng.random_range(0..3usize).min(rng.random_range(0..3usize)) };
        let conclusion = layers[level].choose(rng).expect("non-empty layer").clone();
        let below = &layers[level + 1];
        let n = rng.random_range(1..=below.len().min(3));
        let premises: Vec<Statement> = below.choose_multiple(rng, n).cloned().collect();
        rules.push(RuleEntry { premises, conclusion, entail: grid(rng) });
    }
    let goal = layers[0][0].clone();
    LayeredKb { file: KbFile { facts, rules, ..Default::default() }, goal }
}

fn grid(rng: &mut impl Rng) -> f64 {
    f64::from(rng.random_range(0..=100u32)) / 100.0
}

/// A knowledge base with arbitrary (possibly cyclic) rules and a random
/// search configuration.
#[derive(Debug, Clone)]
pub struct FuzzCase {
    pub file: KbFile,
    pub goal: Statement,
    pub cfg: SearchConfig,
}

pub fn fuzz_case(rng: &mut impl Rng) -> FuzzCase {
    let n = rng.random_range(3..=9);
    let pool: Vec<Statement> = (0..n).map(|j| st(&format!("Claim {j} holds."))).collect();
    let mut facts = Vec::new();
    for s in &pool {
        if rng.random_bool(0.9) {
            facts.push(FactEntry { text: s.clone(), truth: milli(rng, 0, 1000) });
        }
    }
    let n_rules = rng.random_range(0..=12);
    let mut rules = Vec::with_capacity(n_rules);
    for _ in 0..n_rules {
        let mut shuffled = pool.clone();
        shuffled.shuffle(rng);
        let conclusion = shuffled.pop().expect("pool has at least three statements");
        let k = rng.random_range(1..=shuffled.len().min(3));
        rules.push(RuleEntry { premises: shuffled[..k].to_vec(), conclusion, entail: milli(rng, 0, 1000) });
    }
    let max_depth = rng.random_range(1..=3);
    let cfg = SearchConfig {
        max_depth,
        k_root: rng.random_range(1..=6),
        k_inner: rng.random_range(1..=3),
        filter_threshold: *[0.3, 0.5, 0.5, 0.7].choose(rng).expect("non-empty"),
        seed: if rng.random_bool(0.5) { 0 } else { rng.random() },
        force_root_proof: rng.random_bool(0.8),
        selection: if rng.random_bool(0.7) { Selection::OneDeep } else { Selection::Exhaustive },
        ..SearchConfig::default()
    };
    FuzzCase { file: KbFile { facts, rules, ..Default::default() }, goal: pool[0].clone(), cfg }
}
