//! Error type shared by every module in the crate.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All errors the toolkit can produce.
///
/// The variants are grouped by how callers are expected to react: malformed
/// bytes ([`Error::Format`]), inputs outside the supported feature set
/// ([`Error::Unsupported`]), bad parameter values ([`Error::Argument`]),
/// violated operation preconditions such as digest or range checks
/// ([`Error::Precondition`]), and registry conflicts ([`Error::Conflict`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input bytes do not parse as the expected format.
    #[error("format error{}: {msg}", OffsetDisplay(*.offset))]
    Format {
        /// Byte offset of the failure when known.
        offset: Option<usize>,
        msg: String,
    },

    /// The input is well-formed but uses a feature outside the supported subset.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A parameter value is out of its documented range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An operation precondition does not hold (digest mismatch,
    /// coefficient out of range, key misaligned with content).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A registry uniqueness or integrity constraint failed.
    #[error("conflict: {0}")]
    Conflict(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format {
            offset: None,
            msg: msg.into(),
        }
    }

    pub fn format_at(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset: Some(offset),
            msg: msg.into(),
        }
    }
}

struct OffsetDisplay(Option<usize>);

impl fmt::Display for OffsetDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(off) => write!(f, " at byte {off}"),
            None => Ok(()),
        }
    }
}
