use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AnswerMode, AnswerResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedQuestion {
    pub id: String,
    pub reason: String,
}

/// Batch evaluation summary. Skipped questions count as wrong in
/// `accuracy`; every rate other than accuracy is over answered questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mode: AnswerMode,
    pub total: usize,
    pub answered: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Depth of the chosen answer's proof, counted per depth.
    pub depth_histogram: BTreeMap<usize, usize>,
    pub forced_rate: f64,
    pub faithful_rate: f64,
    /// Questions where at least one option's search failed.
    pub option_failures: usize,
    pub mean_wall_time_ms: f64,
    pub skipped: Vec<SkippedQuestion>,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

impl Metrics {
    pub fn compute(mode: AnswerMode, total: usize, results: &[AnswerResult], skipped: Vec<SkippedQuestion>) -> Self {
        let answered = results.len();
        let correct = results.iter().filter(|r| r.correct() == Some(true)).count();
        let mut depth_histogram = BTreeMap::new();
        let mut forced = 0;
        for proof in results.iter().filter_map(|r| r.chosen().proof.as_ref()) {
            *depth_histogram.entry(proof.depth()).or_insert(0) += 1;
            forced += usize::from(proof.forced);
        }
        let wall: u64 = results.iter().map(|r| r.wall_time_ms).sum();
        Self {
            mode,
            total,
            answered,
            correct,
            accuracy: ratio(correct, total),
            depth_histogram,
            forced_rate: ratio(forced, answered),
            faithful_rate: ratio(results.iter().filter(|r| r.faithful).count(), answered),
            option_failures: results.iter().filter(|r| r.per_option.iter().any(|o| o.error.is_some())).count(),
            mean_wall_time_ms: if answered == 0 { 0.0 } else { wall as f64 / answered as f64 },
            skipped,
        }
    }

    /// Plain-text table, one metric per row.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("mode".into(), self.mode.to_string()),
            ("questions".into(), self.total.to_string()),
            ("answered".into(), self.answered.to_string()),
            ("skipped".into(), self.skipped.len().to_string()),
            ("correct".into(), self.correct.to_string()),
            ("accuracy".into(), format!("{:.4}", self.accuracy)),
            ("forced rate".into(), format!("{:.4}", self.forced_rate)),
            ("faithful rate".into(), format!("{:.4}", self.faithful_rate)),
            ("option failures".into(), self.option_failures.to_string()),
            ("mean wall time (ms)".into(), format!("{:.1}", self.mean_wall_time_ms)),
        ];
        for (depth, count) in &self.depth_histogram {
            rows.push((format!("proofs of depth {depth}"), count.to_string()));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        for s in &self.skipped {
            let _ = writeln!(out, "skipped {}: {}", s.id, s.reason);
        }
        out
    }
}
