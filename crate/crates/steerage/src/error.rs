//! Crate-wide error type.
//!
//! One enum covers all failure modes; [`Error::exit_code`] groups variants
//! into the process exit codes used by the CLI (1 usage, 2 data, 3 numeric).

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    // ── file formats ────────────────────────────────────────────────────
    #[error("malformed archive header: {0}")]
    MalformedHeader(String),
    #[error("tensor size mismatch: {0}")]
    SizeMismatch(String),
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("dataset record {index}: {reason}")]
    Record { index: usize, reason: String },
    #[error("dataset: {0}")]
    Data(String),
    #[error("policy file: {0}")]
    Policy(String),
    #[error("config: {0}")]
    Config(String),

    // ── model runtime ───────────────────────────────────────────────────
    #[error("token id {id} out of range (vocab size {vocab})")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("sequence length {len} exceeds model maximum {max}")]
    SequenceTooLong { len: usize, max: usize },

    // ── numerics ────────────────────────────────────────────────────────
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("support violation at index {0}: p > 0 where q = 0")]
    SupportViolation(usize),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// CLI exit code for this error: 2 for data/format problems,
    /// 3 for numeric failures. Usage errors (1) never reach this path.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimMismatch(_)
            | Error::InvalidArg(_)
            | Error::InvalidDistribution(_)
            | Error::SupportViolation(_)
            | Error::IndexOutOfRange { .. }
            | Error::Degenerate(_)
            | Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}
