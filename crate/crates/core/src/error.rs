use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("newton iteration did not converge after {iters} steps (|f| = {residual:.3e})")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("derivative degenerate at iterate (|f'| = {deriv:.3e} below {threshold:.3e})")]
    DegenerateDerivative { deriv: f64, threshold: f64 },

    #[error("zero polynomial has no roots")]
    ZeroPolynomial,

    #[error("polynomial degree {degree} exceeds the configured cap {cap}")]
    DegreeCap { degree: usize, cap: usize },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("branch collision: critical value inside a pullback at stage {stage}")]
    BranchCollision { stage: usize },

    #[error("{check} failed: {detail} (margin {margin:.6e})")]
    CheckFailed {
        check: &'static str,
        detail: String,
        margin: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("search exhausted: {0}")]
    SearchExhausted(String),

    #[error("extended precision backend not available in this build")]
    ExtendedPrecisionUnavailable,

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn check(check: &'static str, detail: impl Into<String>, margin: f64) -> Self {
        Error::CheckFailed {
            check,
            detail: detail.into(),
            margin,
        }
    }
}
