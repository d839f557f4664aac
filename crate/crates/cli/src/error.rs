use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    /// Malformed or inconsistent input; `key` names the offending field.
    #[error("{file}: `{key}`: {reason}")]
    Config { file: String, key: String, reason: String },

    #[error("{0}")]
    Usage(String),

    #[error("{context}: {source}")]
    Core { context: String, source: sfq_core::Error },

    /// The optimizer finished without an accepted sequence. The report was
    /// still written.
    #[error("optimizer did not converge: {0}")]
    NotAccepted(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn core(context: impl Into<String>, source: sfq_core::Error) -> Self {
        CliError::Core { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use sfq_core::Error as E;
        match self {
            CliError::Io { .. } | CliError::Config { .. } | CliError::Usage(_) => EXIT_INPUT,
            CliError::NotAccepted(_) => EXIT_FAILED,
            CliError::Core { source, .. } => match source {
                E::InvalidParameter { .. }
                | E::DimensionMismatch { .. }
                | E::Diagonalization(_)
                | E::PulseTooWide { .. }
                | E::Unnormalized { .. }
                | E::ClockMismatch { .. }
                | E::StepTooLarge { .. }
                | E::EmptySequence
                | E::Parse { .. } => EXIT_INPUT,
                E::NonFiniteDrive
                | E::NoBracket { .. }
                | E::DegenerateInterpolation { .. }
                | E::LengthSearchExhausted { .. } => EXIT_FAILED,
            },
        }
    }
}

/// Attaches a context string to core errors.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T> Context<T> for sfq_core::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| CliError::core(what(), e))
    }
}
