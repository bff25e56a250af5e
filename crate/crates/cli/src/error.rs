use std::path::Path;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{context}: {source}")]
    Core { context: String, source: casimir_core::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_VALIDATION,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core { source, .. } if source.is_validation() => EXIT_VALIDATION,
            CliError::Core { source, .. } if source.is_io() => EXIT_IO,
            CliError::Core { .. } => EXIT_NUMERICAL,
        }
    }
}

impl From<casimir_core::Error> for CliError {
    fn from(source: casimir_core::Error) -> Self {
        CliError::Core { context: "error".into(), source }
    }
}

/// Attaches a context string (usually a file name) to core errors.
pub trait Context<T> {
    fn context(self, what: impl std::fmt::Display) -> Result<T, CliError>;
}

impl<T> Context<T> for Result<T, casimir_core::Error> {
    fn context(self, what: impl std::fmt::Display) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core { context: what.to_string(), source })
    }
}
