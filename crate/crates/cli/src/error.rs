//! CLI failure type carrying the process exit code.
//!
//! Exit codes are categorized so scripts can branch on the failure class:
//!
//! | code | meaning                                                   |
//! |------|-----------------------------------------------------------|
//! | 0    | success                                                   |
//! | 1    | run completed but incomplete (skipped queries, failed cells) |
//! | 2    | usage or configuration error                              |
//! | 3    | missing or unreadable input (files, vectors, recipes)     |
//! | 4    | format error or header mismatch (version, model tag)      |
//! | 5    | embedding/recipe backend failure                          |
//! | 6    | output directory locked by another invocation             |

use std::fmt;

pub const EXIT_INCOMPLETE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_FORMAT: u8 = 4;
pub const EXIT_BACKEND: u8 = 5;
pub const EXIT_LOCKED: u8 = 6;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> CliError {
        CliError { code: EXIT_IO, message: message.into() }
    }

    pub fn locked(message: impl Into<String>) -> CliError {
        CliError { code: EXIT_LOCKED, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<reciper_core::Error> for CliError {
    fn from(e: reciper_core::Error) -> CliError {
        use reciper_core::Error as E;
        let code = match &e {
            E::Io(_) | E::MissingRecipe(_) | E::MissingVector(_) => EXIT_IO,
            E::MalformedRecord { .. }
            | E::VersionMismatch { .. }
            | E::ModelTagMismatch { .. }
            | E::DuplicateId(_)
            | E::DimensionMismatch { .. }
            | E::Json(_) => EXIT_FORMAT,
            E::Backend { .. } => EXIT_BACKEND,
            E::MissingIndex(_) | E::InvalidParam(_) | E::UndefinedMetric(_) => EXIT_USAGE,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError { code: EXIT_IO, message: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> CliError {
        CliError { code: EXIT_FORMAT, message: format!("serialization: {e}") }
    }
}
