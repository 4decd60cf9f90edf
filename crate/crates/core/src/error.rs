use thiserror::Error;

/// Errors raised by the expansion engine and its supporting modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("spectral gap violated: {0}")]
    GapViolation(String),

    #[error("eigenvalue continuation failed: {0} (shrink the circle radius)")]
    Continuation(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("problem too large: {0}")]
    Scale(String),
}

/// Coarse error classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    RangeOrModel,
    Numerical,
    Scale,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Domain(_) | Error::Range(_) | Error::Model(_) | Error::DegenerateVariance(_) => {
                ErrorClass::RangeOrModel
            }
            Error::GapViolation(_) | Error::Continuation(_) | Error::Numerical(_) => {
                ErrorClass::Numerical
            }
            Error::Scale(_) => ErrorClass::Scale,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
