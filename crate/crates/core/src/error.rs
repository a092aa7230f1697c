//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input had the wrong shape or an out-of-range field.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// A forward or backward pass produced a non-finite value.
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    /// An operation was called outside its documented protocol
    /// (e.g. stepping a finished episode, forwarding a noisy layer
    /// that has never been given a noise sample).
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    /// The requested quantity is not defined for this configuration.
    #[error("not available: {0}")]
    NotAvailable(String),

    /// A checkpoint failed validation (version, payload length, env mismatch).
    #[error("rejected checkpoint: {0}")]
    RejectedCheckpoint(String),

    /// Configuration file problems: parse errors, unknown keys, bad values.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
