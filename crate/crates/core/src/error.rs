use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Grids that must agree do not, or a grid is not on the expected domain.
    #[error("structural error: {0}")]
    Structure(String),
    /// A parameter violates an operation's precondition.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// An argument lies outside a function's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A solver produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Every solve in an α sweep failed.
    #[error("all {} solves failed: {}", .0.len(), .0.join("; "))]
    AllSolvesFailed(Vec<String>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
