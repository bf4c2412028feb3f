use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("beta must lie in [0, 1), got {0}")]
    InvalidBeta(f64),

    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("margin exponent r must be at least 1")]
    InvalidExponent,

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("label {label} out of range for {k} classes")]
    LabelOutOfRange { label: usize, k: usize },

    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid network dimensions: {0}")]
    InvalidDims(&'static str),

    #[error("class {class} has {count} samples; at least 2 are needed to split")]
    ClassTooSmall { class: usize, count: u64 },

    #[error("invalid {name}: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
}
