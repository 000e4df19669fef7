use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum PrefsError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    /// The scoring pipeline produced nothing usable.
    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("generation error: {0}")]
    Generation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Metric(#[from] signdpo_textmetrics::MetricError),

    #[error(transparent)]
    Policy(#[from] signdpo_policy::PolicyError),

    #[error(transparent)]
    Core(#[from] signdpo_core::Error),
}

pub type Result<T, E = PrefsError> = std::result::Result<T, E>;
