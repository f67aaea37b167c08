use thiserror::Error;

/// Errors raised by the numerical engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("objects live on different strategy grids")]
    GridMismatch,

    #[error("index {index} out of range for grid of {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("expected a {expected} measure")]
    KindMismatch { expected: &'static str },

    #[error("operation not supported for protocol {0}")]
    UnsupportedProtocol(String),

    #[error("vector field is not finite at t = {t}")]
    NonFinite { t: f64 },

    #[error("weight {weight:e} at index {index} fell below the simplex tolerance at t = {t} (time step too large?)")]
    NegativeWeight { index: usize, weight: f64, t: f64 },

    #[error("kernel is not monotone: form value {value:e} exceeds tolerance")]
    NotMonotone { value: f64 },

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("table parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the time integration itself, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::NegativeWeight { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
