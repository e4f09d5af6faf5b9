use thiserror::Error;

/// Errors raised by the library. Every variant except [`Error::Experiment`]
/// denotes rejected input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polygon loop {loop_index}: {reason}")]
    InvalidPolygon { loop_index: usize, reason: String },

    #[error("grid needs {nodes} nodes ({bytes} bytes per scalar field), above the cap of {cap} nodes")]
    GridTooLarge { nodes: usize, bytes: usize, cap: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code for the CLI: 2 for rejected input, 3 for failed or
    /// inconclusive experiments.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Experiment(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
