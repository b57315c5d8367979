use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A message or frame did not match the protocol state expecting it.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A configuration key was unknown or carried an out-of-range value.
    #[error("config error: {key}: {message}")]
    Config { key: String, message: String },

    /// The requested quantity has no defined value at these inputs.
    #[error("undefined result: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn undefined(msg: impl Into<String>) -> Self {
        Error::Undefined(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
