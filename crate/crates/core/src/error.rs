use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates one of its documented invariants.
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Pulse, reset and sampling timing cannot be laid out on the sample grid.
    #[error("inconsistent timing: {0}")]
    Timing(String),

    /// Adaptive quadrature exhausted its interval budget.
    #[error(
        "quadrature did not converge after {intervals} intervals: \
         estimate {estimate:e} with error estimate {error_estimate:e}"
    )]
    NonConvergence {
        estimate: f64,
        error_estimate: f64,
        intervals: usize,
    },

    #[error("histogram is empty")]
    EmptyHistogram,

    /// Input data does not follow the expected file layout.
    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Rejects NaN and infinities.
pub(crate) fn finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(invalid(name, format!("must be finite, got {value}")))
    }
}

pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<f64> {
    finite(name, value)?;
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(invalid(name, format!("must be >= 0, got {value}")))
    }
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    finite(name, value)?;
    if value > 0.0 {
        Ok(value)
    } else {
        Err(invalid(name, format!("must be > 0, got {value}")))
    }
}

pub(crate) fn probability(name: &'static str, value: f64) -> Result<f64> {
    finite(name, value)?;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(invalid(name, format!("must lie in [0, 1], got {value}")))
    }
}
