use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid scan plan: {0}")]
    Plan(String),

    #[error("slide `{0}` is already registered")]
    Conflict(String),

    #[error("scan aborted after {emitted} tiles: {reason}")]
    ScanAborted { emitted: usize, reason: String },

    #[error(transparent)]
    Core(#[from] vslide_core::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
