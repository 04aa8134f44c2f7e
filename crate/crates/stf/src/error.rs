//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The objective became non-finite during iterative fitting.
    #[error("objective diverged at iteration {iteration}; last finite value {last_objective:e}; retry with a smaller step size")]
    Divergence { iteration: usize, last_objective: f64 },

    #[error("objective is not finite: {0}")]
    NonFiniteObjective(String),

    /// A line of a text file failed to parse; carries file and line context.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A file parsed but its contents are inconsistent with its declared shape.
    #[error("{path}: {message}")]
    Corrupt { path: String, message: String },

    #[error("all {count} tuning trials were degenerate:\n{log}")]
    AllTrialsDegenerate { count: usize, log: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
