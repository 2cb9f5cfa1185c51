use std::io;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric parameter is outside the range an operation accepts.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A spec string or config file could not be parsed.
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    /// Gauss-Hermite node doubling did not reach the requested tolerance.
    #[error("quadrature did not converge at {nodes} nodes: last estimate {last}, previous {previous}")]
    Quadrature { nodes: usize, last: f64, previous: f64 },

    /// The activation produced a non-finite value on a sampled pre-activation.
    #[error("activation overflow at entry ({row}, {col}): pre-activation magnitude {magnitude}")]
    ActivationOverflow { row: usize, col: usize, magnitude: f64 },

    /// A closed-form prediction was requested outside the hypotheses it needs.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    /// An argument lies outside the domain where the function is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Root bracketing failed.
    #[error("bisection bracket failure on [{low}, {high}]: f(low) = {f_low}, f(high) = {f_high}")]
    Bracket { low: f64, high: f64, f_low: f64, f_high: f64 },

    /// A dense eigensolver failed to converge.
    #[error("eigensolver failure: {0}")]
    Eigen(String),

    /// A sampled run broke an invariant the caller asked to enforce.
    #[error("invariant failed: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { context: context.into(), message: message.into() }
    }
}
