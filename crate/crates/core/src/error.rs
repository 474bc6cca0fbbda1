//! Error taxonomy shared by all modules.

use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

/// Errors produced by the selection pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on shapes, ranges, or finiteness was violated.
    InvalidInput(String),
    /// The optimizer or an estimator produced a non-finite value.
    Numerical {
        message: String,
        /// Epoch at which the failure occurred, when inside an optimization.
        epoch: Option<usize>,
    },
    /// A per-bucket failure, tagged with the 1-based bucket index.
    Bucket { bucket: usize, source: Box<Error> },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>, epoch: Option<usize>) -> Self {
        Error::Numerical {
            message: msg.into(),
            epoch,
        }
    }

    pub fn in_bucket(self, bucket: usize) -> Self {
        Error::Bucket {
            bucket,
            source: Box::new(self),
        }
    }

    /// The bucket index attached to this error, if any.
    pub fn bucket_index(&self) -> Option<usize> {
        match self {
            Error::Bucket { bucket, .. } => Some(*bucket),
            _ => None,
        }
    }

    /// True when the root cause is a numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical { .. } => true,
            Error::Bucket { source, .. } => source.is_numerical(),
            Error::InvalidInput(_) => false,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Numerical {
                message,
                epoch: Some(epoch),
            } => write!(f, "numerical failure at epoch {epoch}: {message}"),
            Error::Numerical {
                message,
                epoch: None,
            } => write!(f, "numerical failure: {message}"),
            Error::Bucket { bucket, source } => write!(f, "bucket {bucket}: {source}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
