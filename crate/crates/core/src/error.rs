use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid vertex subset: {0}")]
    InvalidSubset(String),

    #[error("canonical form supports graphs with at most {max} vertices, got {got}")]
    UnsupportedSize { got: usize, max: usize },

    #[error("subgraph order {got} outside supported range {min}..={max}")]
    OrderOutOfRange { got: usize, min: usize, max: usize },

    #[error("exact subgraph constraint on {0:?} is already registered")]
    DuplicateBlock(Vec<usize>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("trial QP did not converge after {iterations} iterations (kkt residual {residual:e})")]
    QpNotConverged { iterations: usize, residual: f64 },

    #[error("SDP solver failure: {0}")]
    Solver(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// True for errors caused by malformed input files.
    pub fn is_parse(&self) -> bool {
        matches!(self, Error::Parse { .. })
    }
}
