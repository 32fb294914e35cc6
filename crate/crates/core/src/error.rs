use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),
    #[error("graph is not {0}")]
    Connectivity(&'static str),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("wrong matrix kind: {0}")]
    Kind(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("degenerate graph: {0}")]
    Degenerate(String),
    #[error("non-finite state at iteration {iter}")]
    Divergence { iter: usize },
    #[error("parameters infeasible: {0}")]
    Infeasible(String),
    #[error("step size inadmissible: {0}")]
    Inadmissible(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("classification error: {0}")]
    Classification(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
