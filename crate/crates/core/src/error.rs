use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("not a TPV1 file: {path}")]
    NotTpv1 { path: PathBuf },

    #[error("unsupported TPV1 header in {path}: {detail}")]
    BadHeader { path: PathBuf, detail: String },

    #[error("payload length mismatch in {path}: header declares {expected} bytes, found {actual}")]
    PayloadLengthMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    /// `offset` is the byte offset in the file when the value came from disk.
    #[error("non-finite value at entry {index}{}", offset.map(|o| format!(" (byte offset {o})")).unwrap_or_default())]
    NonFinite { index: usize, offset: Option<u64> },

    #[error("manifest not found: {path}")]
    ManifestNotFound { path: PathBuf },

    #[error("missing artifact {path}; run the producing command first")]
    MissingArtifact { path: PathBuf },

    #[error("malformed sidecar {path}: {source}")]
    Sidecar {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("shape mismatch ({context}): expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("weights hold {actual} entries but shape {prompt_len}x{embed_dim} needs {expected}")]
    WeightCount {
        prompt_len: usize,
        embed_dim: usize,
        expected: usize,
        actual: usize,
    },

    #[error("dimensions must be positive, got {prompt_len}x{embed_dim}")]
    ZeroDimension { prompt_len: usize, embed_dim: usize },

    #[error("initialization mismatch: pre-trained prompt has init `{pre}`, tuned prompt has init `{ft}`")]
    InitMismatch { pre: String, ft: String },

    #[error("tuned prompt carries no task id")]
    MissingTaskId,

    #[error("initialization prompt already carries task id `{0}`")]
    UnexpectedTaskId(String),

    #[error("lambda {0} outside (0, 1]")]
    LambdaOutOfRange(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("zero-norm vector{}", index.map(|i| format!(" at item {i}")).unwrap_or_default())]
    ZeroVector { index: Option<usize> },

    #[error("evaluation failed at lambda {lambda} on task `{task}`: {message}")]
    Evaluator {
        lambda: f64,
        task: String,
        message: String,
    },

    #[error("no admissible entries for task pair ({0}, {1})")]
    NoAdmissiblePairs(String, String),

    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },

    #[error("label {label} outside label set of size {num_labels}")]
    LabelOutOfRange { label: usize, num_labels: usize },

    #[error("token {token} outside vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },

    #[error("requested {requested} shots but the training split has {available} examples")]
    TooManyShots { requested: usize, available: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
