use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file (bad header, empty file, unparseable cache).
    #[error("format error: {0}")]
    Format(String),

    /// Caller violated an operation precondition.
    #[error("argument error: {0}")]
    Argument(String),

    /// A device lacks the history an operation requires.
    #[error("insufficient history for device {serial}: {valid_days} valid day(s), need {needed}")]
    InsufficientHistory {
        serial: String,
        valid_days: usize,
        needed: usize,
    },

    /// Non-finite value produced where a finite one is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training diverged or could not proceed.
    #[error("training error at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
