use std::path::PathBuf;

use stablegp_core::diagnostics::StabilityReport;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Core(#[from] stablegp_core::Error),

    #[error("{source}\nstability report: {}", serde_json::to_string(report).unwrap_or_default())]
    Numerical {
        #[source]
        source: stablegp_core::Error,
        report: Box<StabilityReport>,
    },
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// `1` for bad invocations or inputs, `2` when a numerical routine failed.
    pub fn exit_code(&self) -> i32 {
        use stablegp_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Parse { .. } | CliError::Json { .. } => 1,
            CliError::Csv(_) => 1,
            CliError::Numerical { .. } => 2,
            CliError::Core(e) => match e {
                E::DimensionMismatch { .. } | E::InvalidParameter { .. } | E::Empty(_) => 1,
                E::NotSymmetric { .. }
                | E::CholeskyFailed { .. }
                | E::CgNotConverged { .. }
                | E::NonFinite(_)
                | E::Divergent(_) => 2,
            },
        }
    }
}
