use std::fmt;
use std::io;

use vslide_core::Error as CoreError;
use vslide_ingest::IngestError;
use vslide_remote::ProtocolError;

/// Failure classes, one per exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// Prefixes the message, keeping the class.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::Io(_) => CliError::Io(e.to_string()),
            CoreError::Config(_) | CoreError::Domain(_) | CoreError::UnknownPipeline(_) => CliError::Usage(e.to_string()),
            CoreError::Tile { source, .. } => match &**source {
                CoreError::Io(_) => CliError::Io(e.to_string()),
                CoreError::Source(s) if s.downcast_ref::<ProtocolError>().is_some_and(is_transport) => {
                    CliError::Io(e.to_string())
                }
                _ => CliError::Data(e.to_string()),
            },
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn is_transport(e: &ProtocolError) -> bool {
    matches!(e, ProtocolError::Io(_) | ProtocolError::Truncated)
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        if is_transport(&e) {
            CliError::Io(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Plan(m) => CliError::Usage(m),
            IngestError::Io(e) => e.into(),
            IngestError::Core(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}
