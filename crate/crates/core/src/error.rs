use thiserror::Error;

/// Errors produced by the estimators, optimisers and file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An estimator or benchmark configuration violated its invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An optimisation produced a NaN or infinite value.
    #[error("non-finite {what} at step {step}")]
    NonFinite { step: usize, what: String },

    /// A text format (point list, CDL document, reservoir snapshot) could not be parsed.
    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
