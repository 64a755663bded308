use thiserror::Error;

/// Domain errors shared by every simulation and analysis module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpbsError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate sampling: {0}")]
    DegenerateSampling(String),

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("all points coincide")]
    CoincidentPoints,

    #[error("fringe visibility too low: {0}")]
    LowVisibility(String),

    #[error("zero variance in `{0}`")]
    ZeroVariance(&'static str),

    #[error("conic is not an ellipse (4AC - B^2 = {0})")]
    NotAnEllipse(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, MpbsError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> MpbsError {
    MpbsError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
