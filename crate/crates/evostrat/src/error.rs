//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's arguments was violated.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A computation produced a non-finite value. Runs abort on this rather
    /// than clamping, so environment or objective bugs surface immediately.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Malformed or inconsistent data on the wire.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Cross-node state disagreement (checksum mismatch). Always fatal.
    #[error("consistency failure: {0}")]
    Consistency(String),

    /// Bad run configuration. `line` is 1-based when the location is known.
    #[error("config error{}: {msg}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },

    /// Fewer workers than required connected within the timeout.
    #[error("quorum failure: {0}")]
    Quorum(String),

    /// Allocation or similar resource exhaustion.
    #[error("resource error: {0}")]
    Resource(String),

    /// Failure reported by an environment during a rollout, with the
    /// perturbation that was being evaluated when it happened.
    #[error("evaluation failed for offset={offset} sign={sign}: {msg}")]
    Eval { offset: u64, sign: i8, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config { line: None, msg: msg.into() }
    }

    pub fn config_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Config { line: Some(line), msg: msg.into() }
    }

    /// Process exit code for this error category. Documented in `--help`.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Argument(_) => 2,
            Error::Quorum(_) => 3,
            Error::Numeric(_) => 4,
            Error::Io(e) if e.kind() == std::io::ErrorKind::AddrInUse => 5,
            Error::Protocol(_) | Error::Consistency(_) => 6,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
