use thiserror::Error;

/// Errors raised by grid, operator and norm computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: expected depths {expected:?}, found {found:?}")]
    SpecMismatch { expected: Vec<u32>, found: Vec<u32> },

    #[error("interval {0} is at the finest scale and has no cancellative Haar function")]
    FinestScale(String),

    #[error("exponent {0} is out of range")]
    ExponentOutOfRange(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("weight values must be finite and strictly positive")]
    NonPositiveWeight,

    #[error("invalid weight recipe: {0}")]
    InvalidRecipe(String),

    #[error("Ω family is empty")]
    EmptyFamily,

    #[error("normalization violated for {block}: norm {norm} exceeds bound {bound}")]
    Normalization { block: String, norm: f64, bound: f64 },

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("config error at {pointer:?}: {message}")]
    Config { pointer: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
