use thiserror::Error;

/// Contract and validation failures raised by the domain types and the
/// score algebra.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("statement is empty after normalization")]
    EmptyStatement,
    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("premise list is empty")]
    EmptyPremises,
    #[error("conclusion `{0}` appears among its own premises")]
    CircularStep(String),
    #[error("malformed context: {0}")]
    MalformedContext(String),
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("invalid proof tree at {path}: {reason}")]
    InvalidTree { path: String, reason: String },
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

/// Rejects NaN and anything outside `[0, 1]`.
pub(crate) fn check_unit(what: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(CoreError::OutOfRange { what, value })
    }
}
