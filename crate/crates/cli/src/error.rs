//! Command-level errors and their process exit codes.

use std::path::PathBuf;

use thiserror::Error;

/// Exit code of a successful command (and of an all-pass verification).
pub const EXIT_OK: u8 = 0;
/// Output could not be written.
pub const EXIT_IO: u8 = 1;
/// Malformed or invalid configuration.
pub const EXIT_CONFIG: u8 = 2;
/// The plant data violate forward completeness or contain a period without
/// an observability window.
pub const EXIT_HYPOTHESIS: u8 = 3;
/// Gain synthesis (or the observer run built on it) failed.
pub const EXIT_SYNTHESIS: u8 = 4;
/// A certificate reported violations.
pub const EXIT_CERTIFICATE: u8 = 5;

/// Where in the configuration document a problem was found.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Location {
    pub line: Option<usize>,
    pub field: Option<String>,
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.line, &self.field) {
            (Some(l), Some(k)) => write!(f, " (line {l}, field `{k}`)"),
            (Some(l), None) => write!(f, " (line {l})"),
            (None, Some(k)) => write!(f, " (field `{k}`)"),
            (None, None) => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error{at}: {message}")]
    Config { at: Location, message: String },

    #[error(transparent)]
    Core(#[from] delobs_core::Error),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub(crate) fn config(line: Option<usize>, field: Option<&str>, message: impl Into<String>) -> Self {
        CliError::Config {
            at: Location {
                line,
                field: field.map(str::to_string),
            },
            message: message.into(),
        }
    }

    /// The process exit code for this error.
    pub fn exit_code(&self) -> u8 {
        use delobs_core::Error as E;
        match self {
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Core(E::Scenario(_)) => EXIT_CONFIG,
            CliError::Core(E::ForwardCompleteness { .. } | E::H2Violation { .. }) => EXIT_HYPOTHESIS,
            CliError::Core(_) => EXIT_SYNTHESIS,
            CliError::Io { .. } | CliError::Csv(_) => EXIT_IO,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
