use thiserror::Error;

/// Errors raised by the simulator and its algorithms.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("ill-conditioned system (condition number {cond:.3e}): {context}")]
    IllConditioned { cond: f64, context: String },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
