use alloc::string::String;
use core::fmt;

/// Errors raised by samplers, models and estimators.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violates a documented precondition.
    InvalidArgument(String),
    /// Two independent event streams produced the same timestamp.
    DuplicateTime(f64),
    /// An operation was invoked in a state where it is undefined
    /// (for example a jump with zero kernel mass).
    InvalidCall(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DuplicateTime(t) => write!(f, "duplicate event time {t} across streams"),
            Error::InvalidCall(msg) => write!(f, "invalid call: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
