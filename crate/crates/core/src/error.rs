use thiserror::Error;

use crate::models::SensitivityViolation;

pub type Result<T> = std::result::Result<T, BoundsError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("probability {value} outside {range}")]
    ProbabilityOutOfRange { value: f64, range: &'static str },

    #[error("invalid sensitivity for cell with p1 = {p1}: {violation}")]
    InvalidSensitivity {
        p1: f64,
        violation: SensitivityViolation,
    },

    #[error("invalid sensitivity-model parameters: {0}")]
    InvalidModel(String),

    #[error("invalid cell '{cell}': {reason}")]
    InvalidCell { cell: String, reason: String },

    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("invalid weight function: {0}")]
    InvalidWeights(String),

    #[error("zero treated mass")]
    ZeroTreatedMass,

    #[error("instance too large for enumeration: {0}")]
    TooLarge(String),

    #[error("internal invariant violated: {0}")]
    InvariantBreach(String),
}
