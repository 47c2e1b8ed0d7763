//! Structured error type shared across the core crate.
//!
//! Every failure names the offending quantity so callers can report it
//! without re-deriving context. Errors are classified into three broad
//! groups (usage, data/shape, numeric) that the CLI maps onto exit codes.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failures produced by the core crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // ─── shape and configuration ────────────────────────────────────
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("tensor data length {len} does not match shape {shape:?} (product {product})")]
    LengthMismatch {
        shape: Vec<usize>,
        len: usize,
        product: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("layer {layer} ({kind}) rejects input shape {input:?}: {detail}")]
    LayerGeometry {
        layer: usize,
        kind: &'static str,
        input: Vec<usize>,
        detail: String,
    },

    // ─── labels and categories ──────────────────────────────────────
    #[error("label {value} at index {index} is out of range for {limit} categories")]
    LabelOutOfRange {
        index: usize,
        value: usize,
        limit: usize,
    },

    #[error("category {name:?} has {count} samples; at least {minimum} required")]
    CategoryTooSmall {
        name: String,
        count: usize,
        minimum: usize,
    },

    #[error("category {index} has no samples in the confusion matrix")]
    EmptyCategory { index: usize },

    // ─── data ingestion ─────────────────────────────────────────────
    #[error("missing category directory {path}")]
    MissingCategoryDir { path: PathBuf },

    #[error("{path}: not a binary PGM (P5) file: {detail}")]
    PgmFormat { path: PathBuf, detail: String },

    #[error("{path}: unsupported PGM maxval {maxval} (only 255 is accepted)")]
    PgmMaxval { path: PathBuf, maxval: u32 },

    #[error("{path}: truncated PGM payload: expected {expected} bytes, got {actual}")]
    PgmTruncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("image {width}x{height} is too small to resize (both sides must be >= 2)")]
    DegenerateImage { width: usize, height: usize },

    #[error("dataset is empty: {detail}")]
    EmptyDataset { detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // ─── statistics and sampling ────────────────────────────────────
    #[error("{context} requires at least {minimum} values, got {actual}")]
    TooFewValues {
        context: &'static str,
        minimum: usize,
        actual: usize,
    },

    #[error("smoothing constant alpha must be positive, got {alpha}")]
    NonPositiveAlpha { alpha: f64 },

    #[error("histogram bin count must be >= 1, got {bins}")]
    ZeroBins { bins: usize },

    #[error("sampling distribution is empty")]
    EmptyDistribution,

    #[error("validation fraction must lie in (0, 1), got {fraction}")]
    BadFraction { fraction: f64 },

    #[error("regression needs at least two distinct x values (all equal {x})")]
    DegenerateRegression { x: f64 },

    #[error("relative change is undefined for baseline 0")]
    ZeroBaseline,

    // ─── checkpoints ────────────────────────────────────────────────
    #[error("checkpoint magic mismatch: expected \"DBVW\", got {found:?}")]
    CheckpointMagic { found: [u8; 4] },

    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    CheckpointVersion { found: u32, supported: u32 },

    #[error("checkpoint truncated while reading {section}")]
    CheckpointTruncated { section: String },

    #[error("checkpoint corrupt: {detail}")]
    CheckpointCorrupt { detail: String },

    // ─── numerics ───────────────────────────────────────────────────
    #[error("non-finite {quantity} encountered at step {step}")]
    NumericDivergence { quantity: &'static str, step: u64 },

    #[error("gradient check limit exceeded: {params} parameters (limit {limit})")]
    CheckTooLarge { params: usize, limit: usize },
}

impl Error {
    /// True when the failure is a numeric divergence (NaN/inf) rather than
    /// a usage or data problem. The CLI maps this onto its own exit code.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NumericDivergence { .. })
    }
}

/// Attach a path to a raw I/O error.
pub(crate) fn io_error(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
    Error::Io {
        path: path.into(),
        source,
    }
}
