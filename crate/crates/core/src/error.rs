use thiserror::Error;

/// Errors raised by the flag-manifold toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The matrix handed to the polar factorization lost column rank.
    #[error("degenerate retraction: matrix is numerically rank deficient")]
    DegenerateRetraction,

    #[error("objective evaluated to a non-finite value")]
    NumericalBlowup,

    #[error("trace-ratio denominator vanished ({0:e})")]
    DegenerateDenominator(f64),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// The pencil (A, B) has singular B so the generalized-eigenvalue
    /// bracket is unavailable; callers should start from a random flag.
    #[error("B is not positive definite; fall back to a random initialization")]
    FallbackToRandomInit,

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
