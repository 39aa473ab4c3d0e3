use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("argument {x} outside the domain of {function}")]
    Domain { function: &'static str, x: f64 },

    #[error("quadrature did not converge: node doubling changed the result by {change:e}")]
    Accuracy { change: f64 },

    #[error("variance multiplier {multiplier} is not positive; the learning rate is too large")]
    StepSize { multiplier: f64 },

    #[error("cannot retract a zero vector onto the sphere")]
    DegenerateState,

    #[error("schedule evaluated at t = {t} outside its tabulated domain [{lo}, {hi}]")]
    ScheduleDomain { t: f64, lo: f64, hi: f64 },

    #[error("summary statistics left [-1.01, 1.01] at t = {t}; the step size is too large")]
    Instability { t: f64 },

    #[error("level {level} is not attainable for t0 = {t0}")]
    NoSolution { level: f64, t0: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
