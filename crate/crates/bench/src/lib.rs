//! Shared fixtures for the search benchmarks.

use std::sync::Arc;

use backchain_core::backend::{KnowledgeBase, MockBackend};
use backchain_core::pipeline::{Pipeline, QuestionRecord};
use backchain_core::testkit::question_set;
use backchain_core::SearchConfig;

/// A mock-backed pipeline over a generated question set.
pub struct Workload {
    pub backend: Arc<MockBackend>,
    pub questions: Vec<QuestionRecord>,
}

impl Workload {
    pub fn generated(seed: u64, n: usize) -> Self {
        let set = question_set(seed, n, 4);
        let kb = KnowledgeBase::new(set.kb.clone()).expect("generated knowledge base is valid");
        Self { backend: Arc::new(MockBackend::new(kb)), questions: set.records() }
    }

    pub fn pipeline(&self, cfg: SearchConfig) -> Pipeline {
        Pipeline::new(self.backend.clone(), cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_answers_every_question() {
        let w = Workload::generated(1, 12);
        let p = w.pipeline(SearchConfig::default());
        for q in &w.questions {
            let r = p.answer_entailer(q).unwrap();
            assert_eq!(r.correct(), Some(true));
        }
    }
}
