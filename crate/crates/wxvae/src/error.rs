use std::io;
use std::path::PathBuf;

/// What is wrong inside a file that was read successfully.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("not a {what} file (expected magic {expected}, found {found:?})")]
    BadMagic {
        what: &'static str,
        expected: &'static str,
        found: String,
    },
    #[error("truncated while reading {0}")]
    Truncated(String),
    #[error("{0} unexpected bytes after the payload")]
    Trailing(u64),
    #[error("value {value} at index {index} is {reason}")]
    InvalidValue {
        index: usize,
        value: f32,
        reason: &'static str,
    },
    #[error("bad header: {0}")]
    Header(String),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{}: {kind}", path.display())]
    Format { path: PathBuf, kind: FormatError },

    #[error(transparent)]
    Core(#[from] wxvae_core::Error),

    /// Bad command line or configuration file.
    #[error("{0}")]
    Usage(String),

    /// A verification subcommand ran and found a mismatch.
    #[error("{0}")]
    Check(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, kind: FormatError) -> Self {
        Self::Format {
            path: path.into(),
            kind,
        }
    }

    /// Short machine-readable class used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Format { .. } => "format",
            Self::Core(_) => "validation",
            Self::Usage(_) => "usage",
            Self::Check(_) => "check",
        }
    }

    /// 1 for validation and usage problems, 2 for anything touching files.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Format { .. } => 2,
            Self::Core(_) | Self::Usage(_) | Self::Check(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
