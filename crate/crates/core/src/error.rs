use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("envelope violation at t={time}: rate {rate} exceeds envelope {envelope}")]
    EnvelopeViolation { time: f64, rate: f64, envelope: f64 },

    #[error("event cap of {cap} exceeded before t={time}; check that the model is subcritical (B < 1)")]
    TooManyEvents { cap: usize, time: f64 },

    #[error("supercritical or unsupported model: {0}")]
    Supercritical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HawkesError {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        HawkesError::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag, used in the CLI's structured error report.
    pub fn kind(&self) -> &'static str {
        match self {
            HawkesError::Domain(_) => "domain",
            HawkesError::InvalidParameter { .. } => "invalid_parameter",
            HawkesError::EnvelopeViolation { .. } => "envelope_violation",
            HawkesError::TooManyEvents { .. } => "too_many_events",
            HawkesError::Supercritical(_) => "supercritical",
            HawkesError::Unsupported(_) => "unsupported",
            HawkesError::Precondition(_) => "precondition",
            HawkesError::Numerical(_) => "numerical",
            HawkesError::Config(_) => "config",
            HawkesError::UnknownKeys(_) => "unknown_keys",
            HawkesError::Io(_) => "io",
            HawkesError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, HawkesError>;
