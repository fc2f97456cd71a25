//! Error type shared by every engine module.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("edge ({0}, {1}) references a joint outside the skeleton of {2} joints")]
    InvalidEdge(usize, usize, usize),
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("missing joint: {0}")]
    MissingJoint(String),
    #[error("sequence too short: {frames} usable frames, need at least 2")]
    DegenerateSequence { frames: usize },
    #[error("verdict for event {0} requires human review before finalization")]
    UnreviewedFinalization(String),
    #[error("audit timestamp {got} precedes last timestamp {last}")]
    OutOfOrderTimestamp { last: u64, got: u64 },
    #[error("audit storage failure: {0}")]
    StorageFailure(String),
    #[error("audit chain broken at line {line}: {reason}")]
    TamperDetected { line: usize, reason: String },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("negative latency at pair {index}")]
    NegativeLatency { index: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("degenerate marginals: chance agreement is 1 but observed agreement is {observed}")]
    DegenerateMarginals { observed: f64 },
    #[error("undefined score: {0}")]
    UndefinedScore(&'static str),
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
    #[error("window must be at least 1")]
    InvalidWindow,
    #[error("need at least two groups, got {0}")]
    InsufficientGroups(usize),
    #[error("parse error on line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("event sink closed")]
    SinkClosed,
    #[error("event {0} is not pending review")]
    NotPending(String),
    #[error("unknown event {0}")]
    UnknownEvent(String),
    #[error("duplicate event id {0}")]
    DuplicateEvent(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::StorageFailure(e.to_string())
    }
}
