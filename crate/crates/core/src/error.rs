use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::StanceLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record ({field}): {message}")]
    Record {
        line: usize,
        field: String,
        message: String,
    },

    #[error("line {line}: unknown stance label {label:?}")]
    UnknownLabel { line: usize, label: String },

    #[error("unknown stance label {0:?}")]
    ParseLabel(String),

    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid agreement input: {0}")]
    Agreement(String),

    #[error("empty annotation list")]
    NoAnnotations,

    #[error("label {0} is not a classification target")]
    NotAClass(StanceLabel),

    #[error("majority tie{} between {tied:?}", doc_id.as_ref().map(|d| format!(" in document {d:?}")).unwrap_or_default())]
    MajorityTie {
        doc_id: Option<String>,
        tied: Vec<StanceLabel>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid chunk weight {0}; token lengths must be positive")]
    ChunkWeight(usize),

    #[error("no gold label for doc_id {0:?}")]
    MissingGold(String),

    #[error("no prediction for doc_id {0:?}")]
    MissingPrediction(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("model is inconsistent: {0}")]
    Model(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
