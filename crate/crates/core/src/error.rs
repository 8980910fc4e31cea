use thiserror::Error;

/// Errors raised by the library. Every variant maps onto one CLI exit code
/// (see [`Error::exit_code`]).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inconsistent shapes, lengths or moduli passed to an operation.
    #[error("usage error: {0}")]
    Usage(String),

    /// An exhaustive enumeration would exceed the configured cap.
    #[error("enumeration cap exceeded for {what}: {size} states > cap {cap}")]
    CapExceeded { what: String, size: f64, cap: u64 },

    /// A probability vector or kernel failed validation.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// The model assumptions do not hold (support violations, Markov
    /// violations, adversary outside its rate class, ...).
    #[error("model error: {0}")]
    Model(String),

    /// A configuration field failed validation.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Exit code used by the CLI: 3 for resource caps, 2 for anything the
    /// caller can fix in its inputs. Code 1 is reserved for invariant
    /// violations found by `verify`.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CapExceeded { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
