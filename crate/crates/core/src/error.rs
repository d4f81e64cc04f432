//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any eegmark operation.
#[derive(Debug, Error)]
pub enum Error {
    // ── identity ─────────────────────────────────────────────────────
    #[error("seed must be exactly 32 bytes, got {0}")]
    InvalidSeed(usize),
    #[error("owner id must be 1..=255 UTF-8 bytes, got {0}")]
    InvalidOwnerId(usize),
    #[error("signing failure: {0}")]
    SigningFailure(String),

    // ── filter ───────────────────────────────────────────────────────
    #[error("block {block_rows}x{block_cols} does not fit the {rows}x{cols} input view")]
    BlockTooLarge {
        block_rows: usize,
        block_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("label space must contain at least one label")]
    InvalidLabelSpace,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("invalid channel map: {0}")]
    InvalidChannelMap(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("invalid hash suite: {0}")]
    InvalidHashSuite(String),
    #[error("out-of-bound magnitude must exceed 1000, got {0}")]
    InvalidOobMagnitude(f64),

    // ── nn ───────────────────────────────────────────────────────────
    #[error("network config error: {0}")]
    Config(String),
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("prune ratio must lie in [0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("layer selector matched no layers: {0}")]
    Selector(String),
    #[error("dataset is empty")]
    EmptyDataset,

    // ── data ─────────────────────────────────────────────────────────
    #[error("synthetic spec error: {0}")]
    Spec(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("metadata error: {0}")]
    Metadata(String),
    #[error("split fractions must sum to 1, got {0}")]
    Split(f64),
    #[error("requested {requested} trigger sources from a dataset of {available}")]
    InsufficientData { requested: usize, available: usize },

    // ── pipeline / attacks ───────────────────────────────────────────
    #[error("watermark record mismatch: {0}")]
    RecordMismatch(String),
    #[error("verification requires at least {min} test inputs, got {got}")]
    TestSetTooSmall { min: usize, got: usize },
    #[error("unknown attack mode: {0}")]
    Mode(String),
    #[error("prune ratios must be sorted in ascending order")]
    RatioOrder,

    // ── io ───────────────────────────────────────────────────────────
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
