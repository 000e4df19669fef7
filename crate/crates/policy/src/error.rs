use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    /// A loss or gradient left the finite range.
    #[error("numeric error: {message}")]
    Numeric { message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint error in {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] signdpo_core::Error),
}

pub type Result<T, E = PolicyError> = std::result::Result<T, E>;
