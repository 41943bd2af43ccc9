use std::path::PathBuf;

/// Errors raised by the library. CLI exit codes are derived from the variant.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },
    #[error("resource limit: {nodes} nodes requested, limit is {limit}")]
    Resource { nodes: usize, limit: usize },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("undefined quotient: function has zero norm")]
    ZeroNorm,
    #[error("weight file {path}: {msg}")]
    WeightFile { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config { line: None, msg: msg.into() }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
