use thiserror::Error;

use crate::config::ConfigError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),

    /// Path loss is undefined for coincident points.
    #[error("path loss requested at zero distance")]
    ZeroDistance,

    #[error("realization contains no links")]
    EmptyRealization,

    #[error("ensemble contains no realizations")]
    EmptyEnsemble,

    #[error("link {index} out of range for a realization of {len} links")]
    LinkOutOfRange { index: usize, len: usize },

    /// Internal invariant breach inside the slot engine. Never a user error.
    #[error("engine fault at slot {slot}: {message}")]
    EngineFault { slot: u64, message: String },

    #[error("horizon of {horizon} slots is too short (at least {required} required)")]
    HorizonTooShort { horizon: u64, required: u64 },

    #[error("unknown regime `{0}`")]
    UnknownRegime(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
