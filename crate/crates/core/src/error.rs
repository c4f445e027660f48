use std::io;

use thiserror::Error;

use crate::codec::CodecError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("field of view ({r}, {c}) already written")]
    DuplicateFov { r: u32, c: u32 },

    #[error("field of view ({r}, {c}) is not part of the slide header")]
    UnknownFov { r: u32, c: u32 },

    #[error("slide file is not a VSF container (bad magic)")]
    BadMagic,

    #[error("slide file is unfinalized (missing footer)")]
    Unfinalized,

    #[error("malformed container: {0}")]
    Format(String),

    #[error("chunk {ordinal} of level {level} is corrupt: {reason}")]
    Corrupt {
        level: u32,
        ordinal: u64,
        reason: String,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("unknown pipeline `{0}`")]
    UnknownPipeline(String),

    #[error("incomplete slide: {0}")]
    Incomplete(String),

    #[error("tile ({r}, {c}) level {level}: {source}")]
    Tile {
        r: u32,
        c: u32,
        level: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("tile source error: {0}")]
    Source(Box<dyn std::error::Error + Send + Sync>),

    #[error(transparent)]
    Codec(#[from] CodecError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn header(msg: impl Into<String>) -> Self {
        Error::InvalidHeader(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
