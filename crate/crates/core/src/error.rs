use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite coordinate ({x}, {y})")]
    NonFinite { x: f64, y: f64 },

    #[error("need at least {required} anchors, got {actual}")]
    TooFewAnchors { required: usize, actual: usize },

    #[error("anchors {first} and {second} coincide")]
    CoincidentAnchors { first: usize, second: usize },

    #[error("reference index {index} out of range for {count} anchors")]
    ReferenceOutOfRange { index: usize, count: usize },

    #[error("source coincides with anchor {0}")]
    SourceAtAnchor(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("expected {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error(
        "redundant TDOA t[{k},{l}] inconsistent with reference differences by {discrepancy:e}"
    )]
    InconsistentTdoa {
        k: usize,
        l: usize,
        discrepancy: f64,
    },

    #[error("weights not normalized (sum = {0})")]
    UnnormalizedWeights(f64),

    #[error("{0}")]
    Config(String),
}
