use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("root finding did not converge: {0}")]
    Convergence(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid instance:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("invalid parameters: {0}")]
    Parameter(String),
    #[error("zone {zone} has no open station within its radius at node {node}")]
    Coverage { node: usize, zone: usize },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("limit reached without a solution: {0}")]
    LimitReached(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
