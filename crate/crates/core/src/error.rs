//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors produced by analysis, inference and container handling.
#[derive(Debug, Error)]
pub enum Error {
    /// An input or intermediate value was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Vector or matrix dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A parameter is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The audio file is not 16 kHz mono PCM16 WAV.
    #[error("wav: {0}")]
    Wav(String),

    /// Feature file length is not a whole number of frames.
    #[error("feature file: {0}")]
    Features(String),

    /// The container does not start with the expected magic bytes.
    #[error("bad magic: expected \"FRGN\"")]
    BadMagic,

    /// The container version is not supported by this build.
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),

    /// The container ends before a declared field or payload.
    #[error("truncated container: {0}")]
    Truncated(&'static str),

    /// A container field holds an impossible value.
    #[error("malformed container: {0}")]
    Malformed(String),

    /// The payload checksum does not match the stored CRC32.
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    /// The tensor set does not match the graph implied by the config.
    #[error("graph mismatch: {0}")]
    GraphMismatch(String),

    /// The config block violates a fixed architectural constant.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The stream hit a numeric failure earlier and must be reset.
    #[error("stream poisoned by an earlier numeric failure; call reset()")]
    Poisoned,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// `true` for errors caused by malformed files (containers, WAV, features).
    pub fn is_format_error(&self) -> bool {
        matches!(
            self,
            Error::Wav(_)
                | Error::Features(_)
                | Error::BadMagic
                | Error::UnsupportedVersion(_)
                | Error::Truncated(_)
                | Error::Malformed(_)
                | Error::Checksum { .. }
                | Error::GraphMismatch(_)
                | Error::InvalidConfig(_)
        )
    }

    /// `true` for NaN/Inf failures during computation.
    pub fn is_numeric_error(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Poisoned)
    }
}
