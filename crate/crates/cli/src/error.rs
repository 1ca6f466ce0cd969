//! CLI error type with exit-code mapping: usage errors exit 2, everything
//! else (numeric, IO, file-format) exits 3.

use std::fmt;
use std::path::PathBuf;

#[derive(Debug)]
pub enum CliError {
    /// Conflicting or missing flags; maps to exit code 2.
    Usage(String),
    Core(deeprec_core::Error),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Unreadable file content, with a 1-based line number.
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    /// Structurally valid file whose contents are inconsistent.
    Format {
        path: PathBuf,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => {
                write!(f, "io error on {}: {source}", path.display())
            }
            CliError::Parse { path, line, msg } => {
                write!(f, "parse error: {}:{line}: {msg}", path.display())
            }
            CliError::Format { path, msg } => {
                write!(f, "format error in {}: {msg}", path.display())
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<deeprec_core::Error> for CliError {
    fn from(e: deeprec_core::Error) -> Self {
        CliError::Core(e)
    }
}
