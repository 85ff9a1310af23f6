//! Bucketed context sentences and their single-line wire form:
//! `[HIGH] s1 s2 [MEDIUM] s3 [LOW] s4`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::statement::Statement;

const HIGH: &str = "[HIGH]";
const MEDIUM: &str = "[MEDIUM]";
const LOW: &str = "[LOW]";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    high: Vec<Statement>,
    medium: Vec<Statement>,
    low: Vec<Statement>,
}

impl Context {
    /// Builds a context, dropping any statement already present in an
    /// earlier (higher) bucket or earlier in the same bucket.
    pub fn new(high: Vec<Statement>, medium: Vec<Statement>, low: Vec<Statement>) -> Self {
        let mut seen = HashSet::new();
        let mut keep = |bucket: Vec<Statement>| -> Vec<Statement> {
            bucket.into_iter().filter(|s| seen.insert(s.key().to_string())).collect()
        };
        let high = keep(high);
        let medium = keep(medium);
        let low = keep(low);
        Self { high, medium, low }
    }

    pub fn high(&self) -> &[Statement] {
        &self.high
    }

    pub fn medium(&self) -> &[Statement] {
        &self.medium
    }

    pub fn low(&self) -> &[Statement] {
        &self.low
    }

    pub fn len(&self) -> usize {
        self.high.len() + self.medium.len() + self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Statement> {
        self.high.iter().chain(&self.medium).chain(&self.low)
    }

    pub fn serialize(&self) -> String {
        self.to_string()
    }

    /// Inverse of [`Context::serialize`]. Statements inside a bucket are
    /// split after every period that is followed by a space.
    pub fn parse(input: &str) -> Result<Self> {
        let bad = |msg: &str| CoreError::MalformedContext(format!("{msg}: {input:?}"));
        let rest = input.strip_prefix(HIGH).ok_or_else(|| bad("missing [HIGH] tag"))?;
        let (high, rest) = split_bucket(rest, MEDIUM).ok_or_else(|| bad("missing [MEDIUM] tag"))?;
        let (medium, low) = split_bucket(rest, LOW).ok_or_else(|| bad("missing [LOW] tag"))?;
        let context = Self {
            high: parse_sentences(high).ok_or_else(|| bad("bad [HIGH] bucket"))?,
            medium: parse_sentences(medium).ok_or_else(|| bad("bad [MEDIUM] bucket"))?,
            low: parse_sentences(low).ok_or_else(|| bad("bad [LOW] bucket"))?,
        };
        let total = context.len();
        if Context::new(context.high.clone(), context.medium.clone(), context.low.clone()).len() != total {
            return Err(bad("statement repeated across buckets"));
        }
        Ok(context)
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (tag, bucket) in [(HIGH, &self.high), (MEDIUM, &self.medium), (LOW, &self.low)] {
            if tag != HIGH {
                f.write_str(" ")?;
            }
            f.write_str(tag)?;
            for s in bucket {
                write!(f, " {s}")?;
            }
        }
        Ok(())
    }
}

/// Splits `" s1 s2 [TAG]rest"` at the tag, returning the bucket body and
/// whatever follows the tag.
fn split_bucket<'a>(input: &'a str, tag: &str) -> Option<(&'a str, &'a str)> {
    let marker = format!(" {tag}");
    let at = input.find(&marker)?;
    Some((&input[..at], &input[at + marker.len()..]))
}

fn parse_sentences(body: &str) -> Option<Vec<Statement>> {
    if body.is_empty() {
        return Some(Vec::new());
    }
    let body = body.strip_prefix(' ')?;
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = body.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        let at_end = i + 1 == bytes.len();
        if b == b'.' && (at_end || bytes[i + 1] == b' ') {
            let raw = &body[start..=i];
            let statement = Statement::new(raw).ok()?;
            if statement.text() != raw {
                return None;
            }
            out.push(statement);
            start = i + 2;
        }
    }
    (start >= body.len()).then_some(out)
}
