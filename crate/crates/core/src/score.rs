//! The score algebra: direct confidence, one-step proof scores and the
//! direct-versus-reasoned choice made at every node.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, CoreError, Result};

/// Tolerance for comparisons across a serialization round trip.
pub const ROUND_TRIP_TOL: f64 = 1e-9;
/// Tolerance for in-memory recomputation.
pub const RECOMPUTE_TOL: f64 = 1e-12;

/// Which of a node's two scores it reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Direct,
    Reasoned,
}

/// Confidence in the predicted label of a direct score: `max(s, 1 - s)`.
pub fn direct_confidence(s_d: f64) -> Result<f64> {
    let s_d = check_unit("direct score", s_d)?;
    Ok(s_d.max(1.0 - s_d))
}

/// `(product of premise scores) * s_e`.
///
/// Factors are multiplied in ascending order so the result is bit-for-bit
/// independent of premise order and monotone in every argument.
pub fn one_step_score(premise_scores: &[f64], s_e: f64) -> Result<f64> {
    if premise_scores.is_empty() {
        return Err(CoreError::EmptyPremises);
    }
    let mut factors = Vec::with_capacity(premise_scores.len() + 1);
    for &p in premise_scores {
        factors.push(check_unit("premise score", p)?);
    }
    factors.push(check_unit("entailment score", s_e)?);
    factors.sort_by(f64::total_cmp);
    Ok(factors.into_iter().product())
}

/// Picks the reported score of a node. The reasoned score wins only when it
/// strictly beats the direct confidence; the direct branch reports the
/// direct *score*, not its confidence.
pub fn node_overall(s_d: f64, s_r: f64) -> Result<(f64, Branch)> {
    let c_d = direct_confidence(s_d)?;
    let s_r = check_unit("reasoned score", s_r)?;
    if s_r > c_d {
        Ok((s_r, Branch::Reasoned))
    } else {
        Ok((s_d, Branch::Direct))
    }
}

/// Snaps a backend score to 9 decimal places, the precision proofs are
/// serialized with, so leaf values survive a JSON round trip exactly.
pub fn quantize(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}
