use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate fit: need at least two distinct abscissae")]
    DegenerateFit,

    #[error("degenerate contingency table: {0}")]
    DegenerateTable(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("non-finite loss at corpus position {position}")]
    NonFiniteSequenceLoss { position: usize },

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("lattice enumeration needs up to {bound} points, limit is {limit}")]
    Resource { bound: u64, limit: u64 },

    #[error("numerical consistency violated: squared error {0} is negative")]
    NumericalConsistency(f64),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("bad magic number in {file}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        file: String,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {file}: expected {expected} bytes, found {found}")]
    Truncated {
        file: String,
        expected: u64,
        found: u64,
    },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("bad IDX header in {file}: {reason}")]
    BadHeader { file: String, reason: String },

    #[error("requested {requested} samples but only {available} are available")]
    Oversubscribed { requested: usize, available: usize },

    #[error("every learning-rate grid point failed; last error: {0}")]
    AllGridPointsFailed(Box<Error>),

    #[error("bad model file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
