use thiserror::Error;

/// Errors raised by the design, simulation and verification layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is numerically singular (pivot {pivot:e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("step budget of {steps} exhausted at t = {t}")]
    StepLimit { t: f64, steps: usize },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mismatched configuration: {0}")]
    Mismatch(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
