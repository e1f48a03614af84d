use thiserror::Error;

/// Errors raised by the library.
///
/// Every variant carries a human-readable message naming the violated
/// condition, so callers can surface it verbatim.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The operation has no implementation for this distribution family.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A rate-form bound was requested outside its stated validity window.
    #[error("outside validity window: {0}")]
    Window(String),
    /// A structural precondition between inputs does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// A truncated computation cannot guarantee its advertised accuracy.
    #[error("truncation error: {0}")]
    Truncation(String),
    /// Malformed serialized input.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
