use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Reasons a SIGDS container can be rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("bad magic: expected \"SIGD\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0} (expected 1)")]
    UnsupportedVersion(u16),
    #[error("unsupported channel count {0} (expected 2)")]
    ChannelCount(u16),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("truncated class table")]
    TruncatedClassTable,
    #[error("truncated payload: record {record} of {declared} is incomplete")]
    TruncatedPayload { record: usize, declared: usize },
    #[error("trailing bytes after final record ({0} bytes)")]
    TrailingBytes(usize),
    #[error("class name {0} is not valid UTF-8")]
    ClassNameEncoding(usize),
    #[error("non-finite sample in record {0}")]
    NonFiniteSample(usize),
    #[error("label {label} out of range in record {record} ({classes} classes)")]
    LabelOutOfRange {
        record: usize,
        label: usize,
        classes: usize,
    },
    #[error("reserved header bytes are not zero")]
    ReservedNonZero,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error in {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{what} diverged at iteration {iteration}: loss is {loss}")]
    Diverged {
        what: &'static str,
        iteration: usize,
        loss: f64,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
