use thiserror::Error;

/// Errors raised while building or solving a precoding problem.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CiError {
    #[error("invalid constellation: {0}")]
    InvalidConstellation(String),

    #[error("value {re}{im:+}j is not a point of the {order}-PSK constellation")]
    NotAConstellationPoint { re: f64, im: f64, order: usize },

    #[error("degenerate CI geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "Gram matrix D is singular (condition number {cond:.3e} > 1e10): \
         the block length N is too small for K users or the block symbols are degenerate"
    )]
    SingularD { cond: f64 },

    #[error("degenerate dual: quadratic form of the dual solution is {0:e}")]
    DegenerateDual(f64),

    #[error("QP rejected at intake: {0}")]
    InvalidQp(String),

    #[error("QP did not converge after {iterations} iterations (KKT residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("primal problem infeasible: {0}")]
    Infeasible(String),

    #[error("rank-deficient channel: {0}")]
    RankDeficient(String),

    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error("{scheme} solver failures: {failures} of {attempts} QPs exceed the 0.1% budget")]
    FailureBudgetExceeded {
        scheme: String,
        failures: usize,
        attempts: usize,
    },
}

pub type Result<T> = std::result::Result<T, CiError>;
