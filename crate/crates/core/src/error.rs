use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate modulus of continuity: omega({r}) = 0")]
    DegenerateModulus { r: f64 },

    #[error("unknown potential `{0}`")]
    UnknownPotential(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("size mismatch: {left} vs {right} samples")]
    SizeMismatch { left: usize, right: usize },

    #[error("chain diverged at step {step}")]
    Divergence { step: u64 },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn ensure_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid("non-finite coordinate"))
    }
}
