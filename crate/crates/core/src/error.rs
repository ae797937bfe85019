use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification of failures, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The input could not be parsed or violates a structural precondition.
    MalformedInput,
    /// The input parsed but a numeric routine cannot produce a result.
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("row {row}: non-finite value")]
    NonFiniteLogit { row: usize },
    #[error("row {row}: label {label} outside [0, {classes})")]
    BadLabelIndex { row: usize, label: i64, classes: usize },
    #[error("row {row}: expected {expected} fields, found {found}")]
    InconsistentWidth { row: usize, expected: usize, found: usize },
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("bad magic number {0:?}")]
    BadMagic(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("unsupported maxval {0} (only 255 is accepted)")]
    UnsupportedMaxval(u32),
    #[error("empty vector")]
    EmptyVector,
    #[error("empty input")]
    EmptyInput,
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty confusion matrix")]
    EmptyMatrix,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("missing class: {0}")]
    MissingClass(String),
    #[error("row {row} of the probability matrix does not sum to 1 (sum = {sum})")]
    RowNotNormalized { row: usize, sum: f64 },
    #[error("statistic must be non-negative, got {0}")]
    NegativeStatistic(f64),
    #[error("class {class} has {count} samples, fewer than the {folds} folds requested")]
    TooFewSamplesPerClass { class: usize, count: usize, folds: usize },
    #[error("image {width}x{height} is smaller than the 8x8 minimum")]
    ImageTooSmall { width: usize, height: usize },
    #[error("{pixels} pixels cannot support {components} mixture components")]
    TooFewPixels { pixels: usize, components: usize },
    #[error("cut graph has no positive capacity")]
    DegenerateGraph,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Io { .. }
            | MalformedHeader(_)
            | NonFiniteLogit { .. }
            | BadLabelIndex { .. }
            | InconsistentWidth { .. }
            | MalformedRow { .. }
            | BadMagic(_)
            | TruncatedPayload { .. }
            | UnsupportedMaxval(_)
            | EmptyVector
            | EmptyInput
            | EmptyBatch
            | EmptyDataset
            | EmptyMatrix
            | DimensionMismatch { .. }
            | LengthMismatch { .. }
            | InvalidArgument(_) => ErrorKind::MalformedInput,
            NonPositiveTemperature(_)
            | MissingClass(_)
            | RowNotNormalized { .. }
            | NegativeStatistic(_)
            | TooFewSamplesPerClass { .. }
            | ImageTooSmall { .. }
            | TooFewPixels { .. }
            | DegenerateGraph => ErrorKind::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
