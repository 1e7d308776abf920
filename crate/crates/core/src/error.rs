use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A corpus line failed to parse or violated a record invariant.
    #[error("line {line}: {message}")]
    Corpus { line: usize, message: String },

    #[error("width mismatch: expected {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unknown metadata source `{0}`")]
    UnknownSource(String),

    #[error("invalid {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("truncated {what}: needed {needed} bytes at offset {offset} (expected length at least {expected}), file has {actual}")]
    Truncated {
        what: &'static str,
        offset: usize,
        needed: usize,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_width(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::WidthMismatch { expected, actual })
    }
}
