use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    #[error("value {value} at ({row}, {column}) is outside [0, 1]")]
    ValueOutOfRange { row: String, column: String, value: f64 },

    #[error("duplicate key `{0}`")]
    DuplicateKey(String),

    #[error("missing cell at ({row}, {column})")]
    MissingCell { row: String, column: String },

    #[error("model sets differ; only in probes: [{only_left}], only in scores: [{only_right}]")]
    ModelMismatch {
        only_left: String,
        only_right: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{folds} folds requested but only {models} models available")]
    TooFewModels { folds: usize, models: usize },

    #[error("control RMSE is zero; reduction is undefined")]
    DegenerateControl,

    #[error("no residual degrees of freedom: {models} models, {params} parameters")]
    InsufficientDof { models: usize, params: usize },

    #[error("invalid degrees of freedom ({0})")]
    InvalidDof(f64),

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("{subsets} subsets exceeds the enumeration cap of {cap}")]
    CapExceeded { subsets: u128, cap: u64 },

    #[error("subset size {k} is invalid for {n} features")]
    KTooLarge { k: usize, n: usize },

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("insufficient samples for class {class} in {split}: need {needed}, have {available}")]
    InsufficientSamples {
        split: &'static str,
        class: u32,
        needed: usize,
        available: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("did not converge after {0} iterations")]
    NonConvergence(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::MalformedFile {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// Data errors are caused by the inputs rather than by a bug or the environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::NonConvergence(_))
    }
}
