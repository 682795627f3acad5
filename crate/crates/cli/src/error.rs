use std::fmt;
use std::path::Path;

use salsr::{Classify, ErrorKind};

/// A failed command: the message shown to the user and its exit class.
#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Config, message: message.into() }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self { kind: ErrorKind::Io, message: format!("{}: {err}", path.display()) }
    }
}

impl<E: Classify + fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        Self { kind: e.kind(), message: e.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;
