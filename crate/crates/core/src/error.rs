use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("negative band value {value} at ({row}, {col})")]
    NegativeBand { row: usize, col: usize, value: f64 },
    #[error("non-finite value in {what} at ({row}, {col})")]
    NonFiniteValue { what: &'static str, row: usize, col: usize },
    #[error("zero standard deviation for dimension {0}")]
    ZeroStd(usize),
    #[error("row {0} of the reference has zero L1 norm")]
    ZeroNormRow(usize),
    #[error("reference metric must be positive, got {0}")]
    NonPositiveReference(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("prediction has asymmetric bands")]
    AsymmetricInput,
    #[error("prediction has symmetric bands")]
    SymmetricInput,
    #[error("dimension {0} has no scores")]
    EmptyDimension(usize),
    #[error("all bands are zero")]
    AllZeroBands,
    #[error("beta must lie in [0, 1], got {0}")]
    BetaOutOfRange(f64),
    #[error("index {index} out of range for cardinality {cardinality}")]
    IndexOutOfRange { index: usize, cardinality: usize },
    #[error("dropout rate must lie in [0, 1), got {0}")]
    RateOutOfRange(f64),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("unknown variant '{0}'")]
    UnknownVariant(String),
    #[error("multiple runs requested for a variant without dropout")]
    RunsForNonDropoutVariant,
    #[error("insufficient history: need {needed}, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("series too short: need at least {needed} points, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("unparseable row {row}: {reason}")]
    UnparseableRow { row: usize, reason: String },
    #[error("partition sizes sum to {requested} but only {total} rows are available")]
    SizesExceedTotal { requested: usize, total: usize },
    #[error("split of length {len} is shorter than window length {window}")]
    SplitTooShort { len: usize, window: usize },
    #[error("inconsistent windows: {0}")]
    InconsistentWindows(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
