use std::path::PathBuf;

/// Errors raised by the core data model and the pure numerics on top of it.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record could not be parsed. `line` is 1-based, `column` is the
    /// 1-based byte column reported by the JSON reader.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Input is well-formed but carries no usable signal (e.g. every target
    /// step masked).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
