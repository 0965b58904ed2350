use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] selfsim::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Failed(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 1 for bad input or configuration, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Core(_) => 2,
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Failed(_) | CliError::Io { .. } => 2,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
