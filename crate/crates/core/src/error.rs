use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("size mismatch for {path}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("class probability row {row} invalid (sum {sum}, min {min})")]
    ProbRowInvalid { row: usize, sum: f64, min: f64 },

    #[error("raw label probability at row {row}, column {col} outside [0, 1]: {value}")]
    RawProbInvalid { row: usize, col: usize, value: f32 },

    #[error("gold label {label} at row {row} outside [0, {classes})")]
    LabelOutOfRange { row: usize, label: u32, classes: usize },

    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("budget {budget} exceeds pool size {pool}")]
    BudgetExceedsPool { budget: usize, pool: usize },

    #[error("duplicate index {0} in selection")]
    DuplicateIndex(usize),

    #[error("index {index} out of range for pool of {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("labeled pool invalid: {0}")]
    LabeledPoolInvalid(String),

    #[error("gold labels required but the dataset has none")]
    MissingLabels,

    #[error("calibration denominator vanished at row {0}")]
    DegenerateRow(usize),

    #[error("embedding row {0} has zero norm")]
    ZeroVector(usize),
}

impl Error {
    /// Input or configuration problems, as opposed to failures while computing.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::DegenerateRow(_) | Error::ZeroVector(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
