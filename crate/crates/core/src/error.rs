use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("schema error: unknown column `{0}`")]
    UnknownColumn(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("duplicate visit {visit_index} for patient `{patient_id}`")]
    DuplicateVisit { patient_id: String, visit_index: u8 },

    #[error("visit ordering error for patient `{patient_id}`: {message}")]
    VisitOrder { patient_id: String, message: String },

    #[error("cohort is empty")]
    EmptyCohort,

    #[error("no patient has exactly two visits")]
    EmptySubset,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate interval: second visit week {w2} is not after first visit week {w1}")]
    DegenerateInterval { w1: f64, w2: f64 },

    #[error("patient `{patient_id}` has {found} visit(s), expected 2")]
    VisitCount { patient_id: String, found: usize },

    #[error("patient `{patient_id}`: {source}")]
    Patient {
        patient_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("feature matrix would be empty")]
    EmptyMatrix,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{axis} has {found} distinct label(s), need at least 2")]
    TooFewLabels { axis: &'static str, found: usize },

    #[error("invalid chi-squared test: {0}")]
    InvalidTest(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("labels contain a single class; metric or model is undefined")]
    SingleClass,

    #[error("{class} class has {have} member(s), need at least {need}")]
    ClassTooSmall {
        class: &'static str,
        have: usize,
        need: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("grid point {grid_index}, fold {fold}: {source}")]
    Training {
        grid_index: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: not found (produce it with `{producer}`)")]
    MissingArtifact { path: PathBuf, producer: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn class_name(positive: bool) -> &'static str {
        if positive {
            "positive"
        } else {
            "negative"
        }
    }
}
