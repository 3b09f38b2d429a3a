use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("insufficient length: series has {len} steps, need more than {needed}")]
    InsufficientLength { len: usize, needed: usize },
    #[error("empty series")]
    EmptySeries,
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("non-binary ground truth at row {row}, column {col}")]
    NonBinary { row: usize, col: usize },
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("undefined {metric}: evaluated entries contain a single class")]
    SingleClass { metric: &'static str },
    #[error("{stage}: {inner}")]
    Stage {
        stage: &'static str,
        inner: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Configuration errors are the caller's fault; everything else is a
    /// runtime or numerical failure.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Stage { inner, .. } => inner.is_config(),
            e => matches!(
                e,
                Error::Config(_) | Error::Shape(_) | Error::InsufficientLength { .. }
            ),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                inner: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
