use std::io;

use crate::capture::CaptureError;
use crate::corpus::EmbedError;
use crate::eval::MetricError;
use crate::features::ClassifyError;
use crate::retrieval::RetrievalError;
use crate::transport::TransportError;

/// Crate-level error for multi-stage operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed {what}: {message}")]
    Malformed { what: String, message: String },
    #[error("unknown session: {0}")]
    UnknownSession(String),
    #[error("no indexed session is available")]
    NoSession,
    #[error("session store is locked by another writer: {0}")]
    Locked(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn malformed(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Malformed {
            what: what.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
