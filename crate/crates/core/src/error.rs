use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: row {row}, column `{column}`: {reason}")]
    BadValue {
        path: PathBuf,
        row: usize,
        column: String,
        reason: String,
    },

    #[error("label column `{0}` not found")]
    MissingLabelColumn(String),

    #[error("single-class dataset: every instance has class `{0}`")]
    SingleClass(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("class `{class}` has {count} instance(s); stratified split needs at least 2")]
    ClassTooSmall { class: String, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty training sample")]
    EmptySample,

    #[error("training sample contains a single class")]
    SingleClassSample,

    #[error("dimension mismatch: expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ensembles were trained on different datasets ({0} vs {1})")]
    FingerprintMismatch(String, String),

    #[error("composition asks for {requested} members from ensemble {ensemble}, which has {available}")]
    CompositionTooLarge {
        ensemble: usize,
        requested: usize,
        available: usize,
    },

    #[error("heatmap export requires 3 ensemble types, got {0}")]
    HeatmapArity(usize),

    #[error("missing results: {0}")]
    MissingCells(String),

    #[error("model container: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
