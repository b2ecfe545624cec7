use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: extreme_bma::Error,
    },

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Machine-readable error record written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn core(context: impl Into<String>) -> impl FnOnce(extreme_bma::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Core { context, source }
    }

    pub fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |e| CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// 1 for input and configuration problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core { source, .. } if source.is_numeric() => 2,
            _ => 1,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let kind = match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Core { source, .. } if source.is_numeric() => "numeric",
            CliError::Core { .. } => "validation",
        };
        ErrorRecord { kind, message: self.to_string(), exit_code: self.exit_code() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
