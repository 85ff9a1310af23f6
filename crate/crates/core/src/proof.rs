//! Entailment steps, proof trees and the bottom-up validator.

use serde::ser::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{check_unit, CoreError, Result};
use crate::score::{self, Branch, ROUND_TRIP_TOL};
use crate::statement::Statement;

/// A one-deep inference `premises ⊢ conclusion` with its entailment score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentStep {
    premises: Vec<Statement>,
    conclusion: Statement,
    s_e: f64,
}

impl EntailmentStep {
    pub fn new(premises: Vec<Statement>, conclusion: Statement, s_e: f64) -> Result<Self> {
        if premises.is_empty() {
            return Err(CoreError::EmptyPremises);
        }
        if premises.iter().any(|p| p.key() == conclusion.key()) {
            return Err(CoreError::CircularStep(conclusion.text().to_string()));
        }
        check_unit("entailment score", s_e)?;
        Ok(Self { premises, conclusion, s_e })
    }

    pub fn premises(&self) -> &[Statement] {
        &self.premises
    }

    pub fn conclusion(&self) -> &Statement {
        &self.conclusion
    }

    pub fn s_e(&self) -> f64 {
        self.s_e
    }
}

/// One node of an entailment tree.
///
/// Nodes are built by the search and by deserialization; the constructors
/// keep `c_d`, `c_r`, `s_r`, `overall` and `branch` consistent with the
/// score algebra. [`rescore_tree`] re-checks all of it from the leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofNode {
    pub statement: Statement,
    pub s_d: f64,
    pub c_d: f64,
    pub step: Option<EntailmentStep>,
    pub children: Vec<ProofNode>,
    pub s_r: f64,
    pub c_r: f64,
    pub overall: f64,
    pub branch: Branch,
    /// The root filter fallback fired: no candidate passed the filter, so the
    /// best candidate was kept regardless, or no candidate existed at all.
    pub forced: bool,
}

impl ProofNode {
    pub fn leaf(statement: Statement, s_d: f64) -> Result<Self> {
        let c_d = score::direct_confidence(s_d)?;
        Ok(Self {
            statement,
            s_d,
            c_d,
            step: None,
            children: Vec::new(),
            s_r: 0.0,
            c_r: 0.0,
            overall: s_d,
            branch: Branch::Direct,
            forced: false,
        })
    }

    /// A node reporting its reasoned score; `s_r` is recomputed from the
    /// children's overall scores.
    pub fn reasoned(
        statement: Statement,
        s_d: f64,
        step: EntailmentStep,
        children: Vec<ProofNode>,
        forced: bool,
    ) -> Result<Self> {
        let c_d = score::direct_confidence(s_d)?;
        let s_r = reasoned_score(&step, &children)?;
        Ok(Self {
            statement,
            s_d,
            c_d,
            step: Some(step),
            children,
            s_r,
            c_r: s_r,
            overall: s_r,
            branch: Branch::Reasoned,
            forced,
        })
    }

    /// Number of entailment steps on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.children.iter().map(|c| c.depth() + 1).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(ProofNode::node_count).sum::<usize>()
    }

    /// Pre-order traversal.
    pub fn nodes(&self) -> Vec<&ProofNode> {
        let mut out = vec![self];
        for child in &self.children {
            out.extend(child.nodes());
        }
        out
    }

    pub fn contains(&self, statement: &Statement) -> bool {
        self.nodes().iter().any(|n| n.statement.key() == statement.key())
    }

    /// Indented plain-text rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out, 0);
        out
    }

    fn render_into(&self, out: &mut String, indent: usize) {
        let pad = "  ".repeat(indent);
        let mut line = format!(
            "{pad}{} [overall {:.3}, {}; s_d {:.3}",
            self.statement,
            self.overall,
            match self.branch {
                Branch::Direct => "direct",
                Branch::Reasoned => "reasoned",
            },
            self.s_d
        );
        if let Some(step) = &self.step {
            line.push_str(&format!(", s_e {:.3}", step.s_e()));
        }
        if self.forced {
            line.push_str(", forced");
        }
        line.push_str("]\n");
        out.push_str(&line);
        if !self.children.is_empty() {
            out.push_str(&format!("{pad}  because:\n"));
        }
        for child in &self.children {
            child.render_into(out, indent + 2);
        }
    }
}

fn reasoned_score(step: &EntailmentStep, children: &[ProofNode]) -> Result<f64> {
    let overall: Vec<f64> = children.iter().map(|c| c.overall).collect();
    score::one_step_score(&overall, step.s_e())
}

/// Recomputes every reasoned score from the leaves, checks each node against
/// the score algebra, and returns the recomputed root score. Stored values
/// must match within [`ROUND_TRIP_TOL`]; only the root may keep a reasoned
/// score that does not beat its direct confidence.
pub fn rescore_tree(tree: &ProofNode) -> Result<f64> {
    let mut path = vec!["root".to_string()];
    rescore_node(tree, &mut path, true)
}

fn rescore_node(node: &ProofNode, path: &mut Vec<String>, is_root: bool) -> Result<f64> {
    let fail = |path: &[String], reason: String| CoreError::InvalidTree { path: path.join("/"), reason };
    let close = |a: f64, b: f64| (a - b).abs() <= ROUND_TRIP_TOL;

    if !(0.0..=1.0).contains(&node.s_d) {
        return Err(fail(path, format!("s_d {} out of range", node.s_d)));
    }
    let c_d = score::direct_confidence(node.s_d).map_err(|e| fail(path, e.to_string()))?;
    if !close(node.c_d, c_d) {
        return Err(fail(path, format!("c_d {} != max(s_d, 1 - s_d) = {c_d}", node.c_d)));
    }
    if node.forced && !is_root {
        return Err(fail(path, "forced flag below the root".into()));
    }
    if !close(node.c_r, node.s_r) {
        return Err(fail(path, format!("c_r {} != s_r {}", node.c_r, node.s_r)));
    }

    let Some(step) = &node.step else {
        if !node.children.is_empty() {
            return Err(fail(path, "children without an entailment step".into()));
        }
        if node.branch != Branch::Direct {
            return Err(fail(path, "reasoned branch without an entailment step".into()));
        }
        if !close(node.s_r, 0.0) {
            return Err(fail(path, format!("leaf has s_r {}", node.s_r)));
        }
        if !close(node.overall, node.s_d) {
            return Err(fail(path, format!("leaf overall {} != s_d {}", node.overall, node.s_d)));
        }
        return Ok(node.s_d);
    };

    if step.conclusion().key() != node.statement.key() {
        return Err(fail(path, format!("step concludes {:?}", step.conclusion().text())));
    }
    if step.premises().len() != node.children.len() {
        return Err(fail(path, format!("{} premises but {} children", step.premises().len(), node.children.len())));
    }
    if node.branch != Branch::Reasoned {
        return Err(fail(path, "direct branch kept its subtree".into()));
    }
    let mut child_scores = Vec::with_capacity(node.children.len());
    for (i, (premise, child)) in step.premises().iter().zip(&node.children).enumerate() {
        path.push(i.to_string());
        if premise.key() != child.statement.key() {
            return Err(fail(path, format!("child does not match premise {:?}", premise.text())));
        }
        child_scores.push(rescore_node(child, path, false)?);
        path.pop();
    }
    let s_r = score::one_step_score(&child_scores, step.s_e()).map_err(|e| fail(path, e.to_string()))?;
    if !close(node.s_r, s_r) {
        return Err(fail(path, format!("s_r {} != recomputed {s_r}", node.s_r)));
    }
    if !close(node.overall, s_r) {
        return Err(fail(path, format!("overall {} != s_r {s_r}", node.overall)));
    }
    if !is_root && s_r <= c_d {
        return Err(fail(path, format!("inner reasoned node with s_r {s_r} <= c_d {c_d}")));
    }
    Ok(s_r)
}

// JSON schema: {statement, s_d, c_d, s_r, overall, branch, forced, s_e?, children[]}
// with every score written as a fixed 9-decimal number.

#[derive(Serialize)]
struct NodeOut<'a> {
    statement: &'a Statement,
    s_d: Fixed9,
    c_d: Fixed9,
    s_r: Fixed9,
    overall: Fixed9,
    branch: Branch,
    forced: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_e: Option<Fixed9>,
    children: &'a [ProofNode],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeIn {
    statement: Statement,
    s_d: f64,
    c_d: f64,
    s_r: f64,
    overall: f64,
    branch: Branch,
    #[serde(default)]
    forced: bool,
    #[serde(default)]
    s_e: Option<f64>,
    #[serde(default)]
    children: Vec<ProofNode>,
}

/// An `f64` serialized as a JSON number with exactly nine decimals.
#[derive(Clone, Copy)]
pub struct Fixed9(pub f64);

impl Serialize for Fixed9 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!("non-finite score {}", self.0)));
        }
        let raw = RawValue::from_string(format!("{:.9}", self.0)).map_err(S::Error::custom)?;
        raw.serialize(serializer)
    }
}

/// `serialize_with` helper for optional scores.
pub fn fixed9_opt<S: Serializer>(value: &Option<f64>, serializer: S) -> std::result::Result<S::Ok, S::Error> {
    value.map(Fixed9).serialize(serializer)
}

/// `serialize_with` helper for scores.
pub fn fixed9<S: Serializer>(value: &f64, serializer: S) -> std::result::Result<S::Ok, S::Error> {
    Fixed9(*value).serialize(serializer)
}

impl Serialize for ProofNode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        NodeOut {
            statement: &self.statement,
            s_d: Fixed9(self.s_d),
            c_d: Fixed9(self.c_d),
            s_r: Fixed9(self.s_r),
            overall: Fixed9(self.overall),
            branch: self.branch,
            forced: self.forced,
            s_e: self.step.as_ref().map(|s| Fixed9(s.s_e())),
            children: &self.children,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ProofNode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let n = NodeIn::deserialize(deserializer)?;
        let step = match n.s_e {
            Some(s_e) => {
                let premises = n.children.iter().map(|c| c.statement.clone()).collect();
                Some(EntailmentStep::new(premises, n.statement.clone(), s_e).map_err(D::Error::custom)?)
            }
            None if !n.children.is_empty() => {
                return Err(D::Error::custom("node has children but no s_e"));
            }
            None => None,
        };
        Ok(ProofNode {
            statement: n.statement,
            s_d: n.s_d,
            c_d: n.c_d,
            step,
            children: n.children,
            s_r: n.s_r,
            c_r: n.s_r,
            overall: n.overall,
            branch: n.branch,
            forced: n.forced,
        })
    }
}
