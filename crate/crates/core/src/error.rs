use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty cloud")]
    EmptyCloud,
    #[error("points and colors differ in length ({points} vs {colors})")]
    LengthMismatch { points: usize, colors: usize },
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("degenerate bounding box (zero extent on every axis)")]
    DegenerateBox,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty projection")]
    EmptyProjection,
    #[error("degenerate series")]
    DegenerateSeries,
    #[error("zero-length vector")]
    ZeroVector,
    #[error("non-finite loss at {0}")]
    NonFiniteLoss(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
