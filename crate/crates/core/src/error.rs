use thiserror::Error;

#[derive(Debug, Error)]
pub enum QfockError {
    #[error("size budget exceeded: {what} = {requested} exceeds budget {budget}")]
    Size {
        what: String,
        requested: usize,
        budget: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    /// A product would climb past the truncation degree and return a polluted value.
    #[error("truncation error: required degree {required} exceeds truncation {truncation}")]
    Truncation { required: usize, truncation: usize },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("unsupported mode: {0}")]
    Unsupported(String),

    #[error("degenerate data: {0}")]
    Degeneracy(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QfockError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(QfockError::Domain(msg.into()))
}
