use std::path::PathBuf;

use crate::boruta::BorutaResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("row {row}, column '{column}': cannot parse '{value}' as a finite number")]
    BadCell { row: usize, column: String, value: String },

    #[error("label column '{0}' not found in header")]
    MissingLabelColumn(String),

    #[error("dataset has a single class; at least two are required")]
    SingleClass,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("singular system in surrogate fit (pivot {pivot} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("feature importances are only defined for forest models, got {0}")]
    NotAForest(&'static str),

    #[error("no relevant features: Boruta confirmed 0 of {} features", .0.status.len())]
    NoRelevantFeatures(Box<BorutaResult>),

    #[error("malformed {what} file {path}: {message}")]
    Artifact {
        what: &'static str,
        path: PathBuf,
        message: String,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::BadCell { .. } => "bad_cell",
            Error::MissingLabelColumn(_) => "missing_label_column",
            Error::SingleClass => "single_class",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::Shape(_) => "shape",
            Error::InvalidParam(_) => "invalid_param",
            Error::Singular { .. } => "singular",
            Error::NotAForest(_) => "not_a_forest",
            Error::NoRelevantFeatures(_) => "no_relevant_features",
            Error::Artifact { .. } => "artifact",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}
