use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input too short: need at least {needed}, got {got}")]
    InputTooShort { needed: usize, got: usize },
    #[error("batch norm in train mode needs at least two values per channel")]
    DegenerateBatch,
    #[error("pooling would produce an empty output from shape {0:?}")]
    OutputEmpty(Vec<usize>),
    #[error("backward called without a recorded forward pass")]
    NoForwardRecorded,
    #[error("clip contains no non-silent frame")]
    EmptyAfterTrim,
    #[error("clip is empty")]
    EmptyClip,
    #[error("split {0} lacks one of the two classes")]
    MissingClass(&'static str),
    #[error("scored set needs both bonafide and fake samples")]
    SingleClass,
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt container: {0}")]
    CorruptContainer(String),
    #[error("container version {0} is not supported")]
    VersionUnsupported(u32),
    #[error("tensor set does not match the architecture: {0}")]
    CountMismatch(String),
}
