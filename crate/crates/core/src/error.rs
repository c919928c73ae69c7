use thiserror::Error;

use crate::soliton::SolitonResult;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A size, tolerance or model parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The input lies outside the domain of a functional (e.g. a ratio of zero norms).
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative solver stopped without meeting its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Option<Box<SolitonResult>>,
    },

    /// A numerical diagnostic tripped (variance blow-up, non-coercivity, ...).
    #[error("diagnostic: {0}")]
    Diagnostic(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
