use thiserror::Error;

use crate::rydberg::PulseProfile;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("pulse optimization did not converge (best infidelity {infidelity:.3e})")]
    Convergence {
        infidelity: f64,
        best: Box<PulseProfile>,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("compile error at op {op}: {message}")]
    Compile { op: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
