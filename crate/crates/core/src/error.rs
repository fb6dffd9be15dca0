use std::path::PathBuf;

/// Errors produced anywhere in the stylization pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("division by near-zero value ({value:e}) in {op}")]
    DivisionByZero { op: &'static str, value: f64 },

    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("mesh is empty")]
    EmptyMesh,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no noun phrase found in prompt {0:?}")]
    NoNounPhrase(String),

    #[error("{phrases} noun phrase(s) but {clusters} object cluster(s)")]
    CountMismatch { phrases: usize, clusters: usize },

    #[error("missing key {0:?}")]
    MissingKey(String),

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("png encoding error: {0}")]
    Png(#[from] png::EncodingError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
