//! Text encoding of angle requests and generations.
//!
//! ```text
//! premises     [Q: <q> A: <a> ]H: <h> P:[ C: <context>]
//! direct       [Q: <q> A: <a> ]H: <h> V:[ C: <context>]
//! entailment   [Q: <q> A: <a> ]H: <h> P: [PREMISE] <p1> [PREMISE] <p2> I:[ C: <context>]
//! hypothesize  Q: <q> A: <a> H:
//! candidates   Q: <q> A:
//! ```
//!
//! Premise generations come back as `[PREMISE] <p1> [PREMISE] <p2> ...`.

use super::{Angle, AngleRequest, BackendError, Result};
use crate::config::Decoding;
use crate::context::Context;
use crate::statement::{QaPair, Statement};

pub const PREMISE_TAG: &str = "[PREMISE]";
const CONTEXT_MARK: &str = " C: [HIGH]";

fn invalid(msg: impl Into<String>) -> BackendError {
    BackendError::InvalidRequest(msg.into())
}

pub fn encode_input(req: &AngleRequest) -> Result<String> {
    req.validate()?;
    let qa_prefix =
        req.qa.as_ref().map(|qa| format!("Q: {} A: {} ", qa.question, qa.answer_option)).unwrap_or_default();
    let ctx_suffix = req.context.as_ref().map(|c| format!(" C: {c}")).unwrap_or_default();
    let h = || req.hypothesis.as_ref().expect("validated");
    let body = match req.angle {
        Angle::Premises => format!("{qa_prefix}H: {} P:", h()),
        Angle::Direct => format!("{qa_prefix}H: {} V:", h()),
        Angle::Entailment => {
            let premises = req.premises.as_deref().expect("validated");
            format!("{qa_prefix}H: {} P: {} I:", h(), encode_premises(premises))
        }
        Angle::Hypothesize => {
            let qa = req.qa.as_ref().expect("validated");
            return Ok(format!("Q: {} A: {} H:", qa.question, qa.answer_option));
        }
        Angle::Candidates => {
            let qa = req.qa.as_ref().expect("validated");
            return Ok(format!("Q: {} A:", qa.question));
        }
    };
    Ok(format!("{body}{ctx_suffix}"))
}

/// Parses an encoded input back into a request (with one sample and default
/// decoding, which travel outside the text).
pub fn decode_input(input: &str) -> Result<AngleRequest> {
    let blank = |angle| AngleRequest {
        angle,
        hypothesis: None,
        premises: None,
        qa: None,
        context: None,
        n_samples: 1,
        decoding: Decoding::default(),
    };

    let (body, context) = match input.rfind(CONTEXT_MARK) {
        Some(at) => {
            let ctx = Context::parse(&input[at + 4..]).map_err(|e| invalid(e.to_string()))?;
            (&input[..at], Some(ctx))
        }
        None => (input, None),
    };

    let (qa, core) = if let Some(rest) = body.strip_prefix("Q: ") {
        match rest.find(" A: ") {
            None => {
                let question = rest.strip_suffix(" A:").ok_or_else(|| invalid("question without answer tag"))?;
                if context.is_some() {
                    return Err(invalid("candidates angle takes no context"));
                }
                return Ok(AngleRequest { qa: Some(QaPair::new(question, "", 0)), ..blank(Angle::Candidates) });
            }
            Some(at) => {
                let question = &rest[..at];
                let after = &rest[at + 4..];
                match after.find(" H: ") {
                    Some(h_at) => (Some(QaPair::new(question, &after[..h_at], 0)), &after[h_at + 1..]),
                    None => {
                        let answer = after.strip_suffix(" H:").ok_or_else(|| invalid("missing H tag"))?;
                        if context.is_some() {
                            return Err(invalid("hypothesize angle takes no context"));
                        }
                        return Ok(AngleRequest {
                            qa: Some(QaPair::new(question, answer, 0)),
                            ..blank(Angle::Hypothesize)
                        });
                    }
                }
            }
        }
    } else {
        (None, body)
    };

    let rest = core.strip_prefix("H: ").ok_or_else(|| invalid(format!("expected `H: ` in {input:?}")))?;
    let statement = |text: &str| Statement::new(text).map_err(|e| invalid(e.to_string()));
    let mut req = if let Some(h) = rest.strip_suffix(" V:") {
        AngleRequest { hypothesis: Some(statement(h)?), ..blank(Angle::Direct) }
    } else if let Some(inner) = rest.strip_suffix(" I:") {
        let at = inner.find(" P: [PREMISE]").ok_or_else(|| invalid("entailment input without premises"))?;
        let premises = decode_premises(&inner[at + 4..]).ok_or_else(|| invalid("unparseable premises"))?;
        AngleRequest {
            hypothesis: Some(statement(&inner[..at])?),
            premises: Some(premises),
            ..blank(Angle::Entailment)
        }
    } else if let Some(h) = rest.strip_suffix(" P:") {
        AngleRequest { hypothesis: Some(statement(h)?), ..blank(Angle::Premises) }
    } else {
        return Err(invalid(format!("unknown angle tag in {input:?}")));
    };
    req.qa = qa;
    req.context = context;
    Ok(req)
}

pub fn encode_premises(premises: &[Statement]) -> String {
    premises.iter().map(|p| format!("{PREMISE_TAG} {p}")).collect::<Vec<_>>().join(" ")
}

/// Parses a premise generation; `None` when it is not a non-empty
/// `[PREMISE]`-delimited list of sentences.
pub fn decode_premises(output: &str) -> Option<Vec<Statement>> {
    let rest = output.trim().strip_prefix(PREMISE_TAG)?;
    rest.split(PREMISE_TAG).map(|part| Statement::new(part.trim()).ok()).collect()
}

pub fn encode_score(score: f64) -> String {
    score.to_string()
}

pub fn decode_score(text: &str) -> Option<f64> {
    text.trim().parse::<f64>().ok().filter(|x| (0.0..=1.0).contains(x))
}
