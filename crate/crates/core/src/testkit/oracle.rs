//! Reference prover that lists every proof tree the search rules allow and
//! takes the best root score. Shares only the score algebra with the search.

use std::collections::HashSet;

use crate::backend::KnowledgeBase;
use crate::score::{direct_confidence, one_step_score};
use crate::statement::Statement;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    pub max_depth: usize,
    pub threshold: f64,
    pub force_root: bool,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self { max_depth: 3, threshold: 0.5, force_root: true }
    }
}

struct Step {
    premises: Vec<Statement>,
    s_e: f64,
    filtered: bool,
}

fn steps(kb: &KnowledgeBase, h: &Statement, threshold: f64) -> Vec<Step> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rule in kb.rules_for(h.key()) {
        let mut keys: Vec<&str> = rule.premises.iter().map(Statement::key).collect();
        keys.sort_unstable();
        keys.dedup();
        if !seen.insert(keys.join("\u{1f}")) {
            continue;
        }
        let s_e = kb.entail_for(&rule.premises, h);
        let filtered = s_e < threshold || rule.premises.iter().any(|p| kb.truth(p.key()) < threshold);
        out.push(Step { premises: rule.premises.clone(), s_e, filtered });
    }
    out
}

/// Every root score reachable by a legal tree for `h`:
/// * a node may stay a leaf, scoring its truth;
/// * a reasoned node uses an unfiltered step whose entailment score beats
///   its direct confidence, and counts only if its reasoned score does too;
/// * a forcing root must use a step when one exists, falling back to
///   filtered steps when none is unfiltered.
pub fn all_tree_scores(kb: &KnowledgeBase, h: &Statement, params: OracleParams) -> Vec<f64> {
    scores(kb, h, params.max_depth, true, &params)
}

fn scores(kb: &KnowledgeBase, h: &Statement, budget: usize, root: bool, p: &OracleParams) -> Vec<f64> {
    let s_d = kb.truth(h.key());
    if budget == 0 {
        return vec![s_d];
    }
    let c_d = direct_confidence(s_d).expect("truth in range");
    let all = steps(kb, h, p.threshold);
    let force = root && p.force_root;
    let unfiltered: Vec<&Step> = all.iter().filter(|s| !s.filtered).collect();
    let pool: Vec<&Step> = if force && unfiltered.is_empty() { all.iter().collect() } else { unfiltered };

    let mut reasoned = Vec::new();
    for step in pool.iter().filter(|s| force || s.s_e > c_d) {
        let per_child: Vec<Vec<f64>> =
            step.premises.iter().map(|prem| scores(kb, prem, budget - 1, false, p)).collect();
        for combo in cartesian(&per_child) {
            reasoned.push(one_step_score(&combo, step.s_e).expect("scores in range"));
        }
    }
    if force && !pool.is_empty() {
        return reasoned;
    }
    let mut out = vec![s_d];
    out.extend(reasoned.into_iter().filter(|&s_r| s_r > c_d));
    out
}

fn cartesian(lists: &[Vec<f64>]) -> Vec<Vec<f64>> {
    lists.iter().fold(vec![Vec::new()], |acc, list| {
        acc.iter()
            .flat_map(|prefix| {
                list.iter().map(move |&x| {
                    let mut next = prefix.clone();
                    next.push(x);
                    next
                })
            })
            .collect()
    })
}

/// Best root score over [`all_tree_scores`].
pub fn brute_force_optimum(kb: &KnowledgeBase, h: &Statement, params: OracleParams) -> f64 {
    all_tree_scores(kb, h, params).into_iter().fold(f64::NEG_INFINITY, f64::max)
}
