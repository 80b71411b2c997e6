use std::path::PathBuf;

use fedopt_core::error::ConfigIssue;

/// Failures surfaced by the command line and file formats.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical abort: {0}")]
    Numerical(fedopt_core::Error),
    #[error(transparent)]
    Core(fedopt_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    /// 0 is success; 2 config, 3 numerical abort, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numerical(_) => 3,
            _ => 1,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<String>, message: impl std::fmt::Display) -> Self {
        AppError::Format { path: path.into(), message: message.to_string() }
    }
}

impl From<fedopt_core::Error> for AppError {
    fn from(e: fedopt_core::Error) -> Self {
        match e {
            fedopt_core::Error::Config(issues) => AppError::Config(render(&issues)),
            fedopt_core::Error::NonFinite { .. } => AppError::Numerical(e),
            other => AppError::Core(other),
        }
    }
}

fn render(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}
