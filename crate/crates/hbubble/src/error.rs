//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spectral degree {0} outside supported range [{1}, {2}]")]
    DegreeOutOfRange(usize, usize, usize),

    #[error("degree mismatch: expected {expected}, got {got}")]
    DegreeMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("1d quadrature did not converge after {0} refinements")]
    QuadratureNonConvergence(usize),

    #[error("ball quadrature refinement stalled: levels differ by {gap:.3e} (tol {tol:.3e})")]
    BallRefinementStalled { gap: f64, tol: f64 },

    #[error("linear operator factorization failed")]
    FactorizationFailure,

    #[error("fixed-point iteration did not converge in {iterations} steps (last update {last:.3e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("fixed-point iteration diverged after {iterations} steps: update norms grew over {growth_steps} consecutive steps")]
    ContractionFailure {
        iterations: usize,
        growth_steps: usize,
        history: Vec<f64>,
    },

    #[error("critical point search failed: {0}")]
    SearchFailed(String),

    #[error("config parse error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
