use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("record {index}: {message}")]
    InvalidRecord { index: usize, message: String },

    #[error("record {index}: {message}")]
    Value { index: usize, message: String },

    #[error("record {index}: shape mismatch: {message}")]
    Shape { index: usize, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("length mismatch: {expected} records but {found} scores")]
    LengthMismatch { expected: usize, found: usize },

    #[error("record {index} has no encoder features")]
    MissingFeatures { index: usize },

    #[error("record {index} has no gold label")]
    MissingLabel { index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("loss became non-finite at epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),
}
