//! Multiple-choice question sets over a generated knowledge base in which
//! only the gold option's hypothesis has a proof that survives the filter.
//!
//! Per question:
//! * the gold hypothesis has one chain of exactly `depth` steps: entailment
//!   in [0.95, 1], leaf premises in [0.95, 1], and one intermediate premise
//!   per level with truth in [0.5, 0.65];
//! * up to two decoy rules for the gold hypothesis, each with a false leaf
//!   premise (truth in [0.05, 0.45]) so the filter always rejects them;
//! * every other option has truth in [0.05, 0.45] and up to three rules,
//!   each with a false leaf premise.
//!
//! The gold proof scores at least 0.95^7 > 0.69 and anything else
//! at most 0.45, so the gold option wins by a margin and with any `k_root`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{milli, st};
use crate::backend::{FactEntry, HypothesisEntry, KbFile, RuleEntry};
use crate::pipeline::QuestionRecord;
use crate::statement::Statement;

#[derive(Debug, Clone)]
pub struct GeneratedQuestion {
    pub record: QuestionRecord,
    /// Steps in the gold chain.
    pub gold_depth: usize,
    pub hypotheses: Vec<Statement>,
}

#[derive(Debug, Clone)]
pub struct QuestionSet {
    pub kb: KbFile,
    pub questions: Vec<GeneratedQuestion>,
}

impl QuestionSet {
    pub fn records(&self) -> Vec<QuestionRecord> {
        self.questions.iter().map(|q| q.record.clone()).collect()
    }
}

struct Builder<'r> {
    rng: &'r mut ChaCha8Rng,
    facts: Vec<FactEntry>,
    rules: Vec<RuleEntry>,
    fresh: usize,
}

impl Builder<'_> {
    fn statement(&mut self, q: usize, truth: f64) -> Statement {
        self.fresh += 1;
        let s = st(&format!("Item {q} has trait {}.", self.fresh));
        self.facts.push(FactEntry { text: s.clone(), truth });
        s
    }

    fn true_leaf(&mut self, q: usize) -> Statement {
        let t = milli(self.rng, 950, 1000);
        self.statement(q, t)
    }

    fn false_leaf(&mut self, q: usize) -> Statement {
        let t = milli(self.rng, 50, 450);
        self.statement(q, t)
    }

    fn chain(&mut self, q: usize, conclusion: &Statement, depth: usize) {
        let mut premises = Vec::new();
        if depth > 1 {
            let t = milli(self.rng, 500, 650);
            let mid = self.statement(q, t);
            self.chain(q, &mid, depth - 1);
            premises.push(mid);
        } else {
            premises.push(self.true_leaf(q));
        }
        if self.rng.random_bool(0.5) {
            premises.push(self.true_leaf(q));
        }
        premises.shuffle(self.rng);
        let entail = milli(self.rng, 950, 1000);
        self.rules.push(RuleEntry { premises, conclusion: conclusion.clone(), entail });
    }

    fn decoy(&mut self, q: usize, conclusion: &Statement) {
        let mut premises = vec![self.false_leaf(q)];
        if self.rng.random_bool(0.5) {
            premises.push(self.true_leaf(q));
        }
        premises.shuffle(self.rng);
        let entail = milli(self.rng, 500, 1000);
        self.rules.push(RuleEntry { premises, conclusion: conclusion.clone(), entail });
    }
}

/// `n` questions with `n_options` options each (at least 2), reproducible
/// from `seed`. Gold depths cycle through 1, 2 and 3 before shuffling.
pub fn question_set(seed: u64, n: usize, n_options: usize) -> QuestionSet {
    assert!(n_options >= 2, "need at least two options");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut depths: Vec<usize> = (0..n).map(|i| 1 + i % 3).collect();
    depths.shuffle(&mut rng);
    let mut b = Builder { rng: &mut rng, facts: Vec::new(), rules: Vec::new(), fresh: 0 };
    let mut hypothesis_entries = Vec::new();
    let mut questions = Vec::with_capacity(n);

    for (q, &depth) in depths.iter().enumerate() {
        let question = format!("Which statement about item {q} is true?");
        let gold = b.rng.random_range(0..n_options);
        let mut options = Vec::with_capacity(n_options);
        let mut hypotheses = Vec::with_capacity(n_options);
        for j in 0..n_options {
            let option = format!("choice {}", (b'a' + j as u8) as char);
            let h = st(&format!("Item {q} satisfies claim {j}."));
            if j == gold {
                let t = milli(b.rng, 300, 700);
                b.facts.push(FactEntry { text: h.clone(), truth: t });
                b.chain(q, &h, depth);
                for _ in 0..b.rng.random_range(0..=2) {
                    b.decoy(q, &h);
                }
            } else {
                let t = milli(b.rng, 50, 450);
                b.facts.push(FactEntry { text: h.clone(), truth: t });
                for _ in 0..b.rng.random_range(0..=3) {
                    b.decoy(q, &h);
                }
            }
            hypothesis_entries.push(HypothesisEntry {
                question: question.clone(),
                option: option.clone(),
                hypothesis: h.clone(),
            });
            options.push(option);
            hypotheses.push(h);
        }
        let record = QuestionRecord::multiple_choice(format!("gen-{q}"), question, options, Some(gold));
        questions.push(GeneratedQuestion { record, gold_depth: depth, hypotheses });
    }

    let kb = KbFile { facts: b.facts, rules: b.rules, hypotheses: hypothesis_entries, ..Default::default() };
    QuestionSet { kb, questions }
}
