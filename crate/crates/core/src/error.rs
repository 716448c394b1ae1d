use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Wire-level decode failures. Each variant maps to a distinct code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("bad magic 0x{0:08x}")]
    BadMagic(u32),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u16),
    #[error("crc mismatch (stored 0x{stored:08x}, computed 0x{computed:08x})")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("truncated frame: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("invalid payload: {0}")]
    InvalidPayload(&'static str),
    #[error("unexpected time index {got} (expected {expected})")]
    OutOfOrder { expected: u32, got: u32 },
    #[error("duplicate frame for time index {0}")]
    Duplicate(u32),
}

impl ProtocolError {
    pub fn code(&self) -> i32 {
        match self {
            ProtocolError::BadMagic(_) => 1,
            ProtocolError::UnsupportedVersion(_) => 2,
            ProtocolError::CrcMismatch { .. } => 3,
            ProtocolError::Truncated { .. } => 4,
            ProtocolError::InvalidPayload(_) => 5,
            ProtocolError::OutOfOrder { .. } => 6,
            ProtocolError::Duplicate(_) => 7,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration problem tied to a named key.
    #[error("{msg}")]
    Config { key: String, msg: String },

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Protocol(#[from] ProtocolError),

    #[error("timestep {time} aborted at panel {panel}: {reason}")]
    TimestepAborted { time: u32, panel: u16, reason: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
