use std::fmt;

use thiserror::Error;

/// A single violated invariant found while validating a value.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub value: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}: {}", self.field, self.value, self.message)
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid loop configuration: {}", join_violations(.0))]
    InvalidSpec(Vec<Violation>),

    #[error("value out of domain: {0}")]
    OutOfDomain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numeric failure in window [{t_lo}, {t_hi}]: {message}")]
    Numeric {
        t_lo: f64,
        t_hi: f64,
        message: String,
    },

    #[error("state diverged at t = {time} (|state| = {magnitude:e})")]
    Divergence { time: f64, magnitude: f64 },

    #[error("modulator unstable: state {state} diverged at sample {sample} (|value| = {magnitude:e})")]
    Instability {
        sample: usize,
        state: usize,
        magnitude: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &str, value: impl fmt::Display, message: &str) -> Self {
        Error::InvalidSpec(vec![Violation {
            field: field.to_string(),
            value: value.to_string(),
            message: message.to_string(),
        }])
    }

    /// True for errors caused by the caller's configuration rather than by the
    /// numerics of a run.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_) | Error::OutOfDomain(_) | Error::Usage(_) | Error::Unsupported(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
