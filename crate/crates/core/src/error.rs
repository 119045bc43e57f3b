//! Crate-wide error type.
//!
//! Variants split along the boundary callers care about: `Io` and `Format`
//! mean the bytes on disk are unusable, everything else means the caller
//! asked for something the data cannot support.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Underlying filesystem failure.
    Io { path: String, source: std::io::Error },
    /// Malformed file contents: bad header, bad offsets, unknown dtype.
    Format { message: String },
    /// Well-formed input that violates an operation's contract.
    Validation { message: String },
    /// Two vectors or tensors that must share a length do not.
    DimensionMismatch { context: String, expected: usize, got: usize },
    /// Two checkpoints that must share an architecture do not.
    ArchMismatch { detail: String },
    /// A signature was built against a different architecture than the
    /// patch target. Both digests are kept so callers can print them.
    FingerprintMismatch { expected: String, found: String },
    /// Training produced a non-finite loss.
    Divergence { epoch: usize, loss: f64 },
}

impl Error {
    pub fn format(message: impl Into<String>) -> Error {
        Error::Format { message: message.into() }
    }

    pub fn validation(message: impl Into<String>) -> Error {
        Error::Validation { message: message.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Error {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by unreadable or malformed files, as opposed
    /// to contract violations on well-formed data.
    pub fn is_io_or_format(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. })
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "{path}: {source}"),
            Error::Format { message } => write!(f, "{message}"),
            Error::Validation { message } => write!(f, "{message}"),
            Error::DimensionMismatch { context, expected, got } => {
                write!(f, "{context}: expected length {expected}, got {got}")
            }
            Error::ArchMismatch { detail } => {
                write!(f, "architecture mismatch: {detail}")
            }
            Error::FingerprintMismatch { expected, found } => {
                write!(f, "fingerprint mismatch: target {expected}, signature {found}")
            }
            Error::Divergence { epoch, loss } => {
                write!(f, "training diverged at epoch {epoch}: loss {loss}")
            }
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
