//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    DimMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    #[error("{what}: index {index} out of range for size {size}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{what} = {value} outside {expected}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("sequence length {len} exceeds maximum {max}")]
    TooLong { len: usize, max: usize },

    #[error("frame {frame}: label sequence has length {got}, expected word count {want}")]
    FrameAlignment { frame: usize, got: usize, want: usize },

    #[error("unknown SRL label {label:?}")]
    UnknownLabel { label: String },

    #[error("frame {frame}: illegal BIO transition {prev:?} -> {next:?} at position {pos}")]
    BioViolation {
        frame: usize,
        pos: usize,
        prev: String,
        next: String,
    },

    #[error("frame {frame}: predicate position {pos} does not carry the V label")]
    PredicateMismatch { frame: usize, pos: usize },

    #[error("frames are not ordered by strictly increasing predicate position (frame {frame})")]
    FrameOrder { frame: usize },

    #[error("vocabulary error: {0}")]
    Vocab(String),

    #[error("{path}: {count} invalid line(s):\n{report}")]
    DatasetInvalid {
        path: String,
        count: usize,
        report: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("span decode: all candidate positions are masked")]
    AllMasked,

    #[error("degenerate input for {what}: {msg}")]
    Degenerate { what: &'static str, msg: String },

    #[error("training diverged: non-finite loss at step {step}")]
    Diverged { step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
