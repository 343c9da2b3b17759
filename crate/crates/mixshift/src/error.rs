//! Crate-wide error type.

/// Errors produced by mixture construction, solvers, and probes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid simplex vector: {0}")]
    InvalidSimplex(String),

    #[error("invalid learning curve: {0}")]
    InvalidCurve(String),

    #[error("dimension mismatch: expected {expected} components, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operation not defined for curve kind {kind}: {hint}")]
    UnsupportedCurve { kind: &'static str, hint: &'static str },

    #[error("{context}: no convergence within budget (residual {residual:.3e})")]
    NonConvergence { context: String, residual: f64 },

    #[error("point is within {margin:.3e} of the simplex boundary; need margin >= {required:.3e}")]
    BoundaryProximity { margin: f64, required: f64 },

    #[error("monotonicity contract violated: {0}")]
    ContractViolation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("loss does not reach epsilon = {epsilon} within N_max = {n_max}")]
    TargetUnreachable { epsilon: f64, n_max: u64 },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
