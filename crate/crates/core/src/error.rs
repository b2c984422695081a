use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("fit error: {0}")]
    Fit(String),

    /// Malformed or incomplete scenario configuration.
    #[error("config error: {0}")]
    Config(String),

    /// The configuration parses but describes an unphysical setup.
    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn ensure_finite_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} must be finite and non-negative, got {v}")))
    }
}

pub(crate) fn ensure_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} must be finite and positive, got {v}")))
    }
}
