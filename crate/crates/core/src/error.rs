use std::path::PathBuf;

use thiserror::Error;

use crate::spec::SyntaxError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: missing column `{column}`")]
    MissingColumn { column: String },

    #[error("parse error at row {row}, column `{column}`: cannot read {value:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("model specification has {} error(s); first: {}", .0.len(), .0.first().map(|e| e.to_string()).unwrap_or_default())]
    Spec(Vec<SyntaxError>),

    #[error("specification does not match dataset: {}", .0.join("; "))]
    SpecMismatch(Vec<String>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("evaluation error for person {person}, task {task}: {message}")]
    Evaluation {
        person: String,
        task: String,
        message: String,
    },

    #[error("start point rejected: {0}")]
    StartPoint(String),

    #[error("singular Hessian: smallest eigenvalue {eigenvalue:e} is dominated by parameter `{parameter}` (likely unidentified)")]
    SingularHessian { parameter: String, eigenvalue: f64 },

    #[error("coefficient of variation is undefined for a zero mean")]
    UndefinedCov,

    #[error("identification: {0}")]
    Identification(String),

    #[error("json error: {0}")]
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
