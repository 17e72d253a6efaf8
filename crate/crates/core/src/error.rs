use thiserror::Error;

/// Errors raised anywhere in the search pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?} for {len} elements")]
    Shape { shape: Vec<usize>, len: usize },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("index error: {0}")]
    Index(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("parse error at {location}: {detail}")]
    Parse { location: String, detail: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("diverged at epoch {epoch}: {detail}")]
    Divergence {
        epoch: usize,
        detail: String,
        history: Vec<crate::search::HistoryRow>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            detail: detail.into(),
        }
    }
}
