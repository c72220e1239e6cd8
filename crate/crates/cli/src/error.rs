use thiserror::Error;

/// Process exit status for success.
pub const EXIT_OK: i32 = 0;
/// Reading or writing files failed.
pub const EXIT_IO: i32 = 1;
/// The configuration or command line is invalid.
pub const EXIT_VALIDATION: i32 = 2;
/// A computation failed.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("numerical failure: {0}")]
    Numerical(spinlock::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Validation { field: field.into(), reason: reason.into() }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } | CliError::Parse { .. } => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

impl From<spinlock::Error> for CliError {
    /// Parameter errors raised by the core library come from configured values.
    fn from(e: spinlock::Error) -> Self {
        match e {
            spinlock::Error::InvalidParameter { name, reason } => CliError::validation(name, reason),
            spinlock::Error::InvalidWindow(reason) => CliError::validation("window", reason),
            spinlock::Error::InvalidState(reason) => CliError::validation("initial", reason),
            other => CliError::Numerical(other),
        }
    }
}
