use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} exceeds size cap ({size} > {cap})")]
    SizeCap {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("no linearly independent row subset found after {0} draws (degenerate matrix)")]
    Degenerate(usize),

    #[error("cell (sample {sample}, coordinate {coord}) is out of bounds")]
    OutOfBounds { sample: usize, coord: usize },

    #[error("cell (sample {sample}, coordinate {coord}) appears twice in plan")]
    DuplicateCell { sample: usize, coord: usize },

    #[error("coordinate {0} has no visible entries")]
    HiddenCoordinate(usize),

    #[error("no fully visible samples")]
    NoCleanSamples,

    #[error("every sample was discarded during recovery")]
    AllDiscarded,

    #[error("dataset contains masked entries")]
    MaskedEntries,

    #[error("matrix is not positive semidefinite")]
    NotPsd,

    #[error("difference lies outside the covariance range (residual {0:e})")]
    OutsideRange(f64),

    #[error("selected support is rank deficient")]
    RankDeficientSupport,

    #[error("visible entries are inconsistent with the structure (residual {residual:e})")]
    Inconsistent { residual: f64 },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// True for failures caused by the filesystem or an unreadable stream.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}
