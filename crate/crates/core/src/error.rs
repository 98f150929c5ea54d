use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: {reason}")]
    Ingest {
        path: String,
        line: usize,
        column: usize,
        reason: String,
    },
    #[error("invalid data: {0}")]
    Data(String),
    #[error("gene ids do not match: {0}")]
    GeneMismatch(String),
    #[error("unknown token '{0}' and the vocabulary has no <UNK>")]
    UnknownToken(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Smiles(#[from] exprmol_chem::SmilesError),
    #[error(transparent)]
    Metrics(#[from] exprmol_chem::MetricsError),
}

impl CoreError {
    pub fn shape_pair(op: &str, a: &[usize], b: &[usize]) -> Self {
        CoreError::Shape(format!("{op}: {a:?} vs {b:?}"))
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable code for command-line error reporting.
    pub fn code(&self) -> &'static str {
        match self {
            CoreError::Shape(_) | CoreError::NonScalarLoss(_) => "E_SHAPE",
            CoreError::NonFinite(_) => "E_NAN",
            CoreError::Io { .. } => "E_IO",
            CoreError::Ingest { .. } => "E_INGEST",
            CoreError::Data(_) => "E_DATA",
            CoreError::GeneMismatch(_) => "E_GENES",
            CoreError::UnknownToken(_) => "E_VOCAB",
            CoreError::Checkpoint(_) => "E_CHECKPOINT",
            CoreError::Config(_) => "E_CONFIG",
            CoreError::Smiles(_) => "E_SMILES",
            CoreError::Metrics(_) => "E_METRICS",
        }
    }

    /// Whether the failure stems from user input rather than a bug or an
    /// unstable run.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, CoreError::Shape(_) | CoreError::NonScalarLoss(_) | CoreError::NonFinite(_))
    }
}
