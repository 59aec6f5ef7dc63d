use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("inhomogeneous integral did not converge: relative change {achieved:.3e} after {points} points")]
    Integration { achieved: f64, points: usize },

    #[error("time step underflow: largest rate {max_rate:.3e}/us exceeds the 1e9/us limit")]
    StepUnderflow { max_rate: f64 },

    #[error("jacobian is rank deficient; unidentifiable combination: {combination}")]
    RankDeficient { combination: String },

    #[error("fit did not converge after {iterations} iterations (residual norm {residual_norm:.6e})")]
    NotConverged { iterations: usize, residual_norm: f64 },

    #[error("no decay present in transient")]
    NoDecay,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter { name, reason: reason.into() }
    }
}
