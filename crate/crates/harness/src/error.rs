use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Invalid or incomplete configuration; the CLI maps this to exit code 2.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    /// A loss left the finite range. Carries enough context to find the
    /// offending sample.
    #[error("non-finite loss at epoch {epoch}, step {step}, sample {sample}: {message}")]
    NonFinite {
        epoch: usize,
        step: usize,
        sample: String,
        message: String,
    },

    /// A run-time invariant broke, e.g. the reference model drifted.
    #[error("invariant violated: {0}")]
    Invariant(String),

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

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Core(#[from] signdpo_core::Error),

    #[error(transparent)]
    Policy(#[from] signdpo_policy::PolicyError),

    #[error(transparent)]
    Metric(#[from] signdpo_textmetrics::MetricError),

    #[error(transparent)]
    Prefs(#[from] signdpo_langprefs::PrefsError),
}

impl HarnessError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Input(_) => "input",
            HarnessError::NonFinite { .. } => "non_finite",
            HarnessError::Invariant(_) => "invariant",
            HarnessError::Io { .. } => "io",
            HarnessError::Parse { .. } => "parse",
            HarnessError::Csv { .. } => "csv",
            HarnessError::Core(signdpo_core::Error::Config(_))
            | HarnessError::Policy(signdpo_policy::PolicyError::Config(_))
            | HarnessError::Metric(signdpo_textmetrics::MetricError::Config(_))
            | HarnessError::Prefs(signdpo_langprefs::PrefsError::Config(_)) => "config",
            HarnessError::Core(_) => "core",
            HarnessError::Policy(_) => "policy",
            HarnessError::Metric(_) => "metric",
            HarnessError::Prefs(_) => "prefs",
        }
    }

    /// Process exit code: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.kind() == "config" {
            2
        } else {
            1
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Csv { path, source }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
