use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("human score {0} outside [0, 1]")]
    HumanScoreOutOfRange(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("no training data")]
    NoTrainingData,
    #[error("over-parameterized: {components} components for {samples} samples")]
    OverParameterized { components: usize, samples: usize },
    #[error("invalid mixture model: {0}")]
    InvalidModel(String),
    #[error("non-adjacent link query: frame {from} -> frame {to}")]
    NonAdjacentLink { from: u32, to: u32 },
    #[error("detection at frame {frame}, index {index} has no actionness score")]
    MissingActionness { frame: u32, index: u32 },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("classifier needs at least one {0} example")]
    EmptyClass(&'static str),
    #[error("no comparable frames")]
    NoComparableFrames,
    #[error("no ground truth tracks")]
    NoGroundTruth,
    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
