use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid anthropometry: {0}")]
    InvalidAnthropometry(String),

    #[error("mass matrix is not positive definite")]
    SingularMassMatrix,

    #[error("integration failed at t = {t}: step size {h:e} below minimum")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("invalid muscle parameters for {name}: {reason}")]
    InvalidMuscle { name: String, reason: String },

    #[error("contractile element state did not converge for muscle {0}")]
    CeNotConverged(String),

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("not enough strides: need at least {needed}, got {got}")]
    InsufficientStrides { needed: usize, got: usize },

    #[error("zero-magnitude vector in {0}")]
    ZeroMagnitude(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("expected exactly {expected} values, got {got}")]
    WrongCount { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no stage-3 gait found within the evaluation budget")]
    NoViableGait,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
