use stride_core::Error as CoreError;
use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Core(e) => match e {
                CoreError::Config(_) | CoreError::Domain(_) | CoreError::Size(_) => EXIT_USAGE,
                CoreError::Data(_) | CoreError::Schema(_) | CoreError::Archive(_) => EXIT_DATA,
                CoreError::Numerical(_) | CoreError::UndefinedMetric(_) => EXIT_NUMERICAL,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
