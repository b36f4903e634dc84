use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("mixture has {components} components, more than the cap of {cap}")]
    Capacity { components: usize, cap: usize },

    #[error("horizon mismatch: {what} has length {got}, expected {expected}")]
    HorizonMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no admissible input: {0}")]
    InputInfeasible(Box<crate::propagation::Certificate>),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
