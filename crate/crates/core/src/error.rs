use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: label {label} out of range for {classes} classes (row {row})")]
    Label {
        op: &'static str,
        row: usize,
        label: usize,
        classes: usize,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("parameter `{0}` has no gradient; call zero_grad and backward first")]
    MissingGrad(String),

    #[error("invalid transform: {0}")]
    Transform(String),

    #[error("invalid view set: {0}")]
    ViewSet(String),

    #[error("invalid architecture: {0}")]
    Arch(String),

    #[error("unknown branch `{0}`")]
    UnknownBranch(String),

    #[error("not supported: {0}")]
    Unsupported(String),

    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("parse error at byte offset {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFinite {
        epoch: usize,
        step: usize,
        loss: f64,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Data(_) | Error::Io(_) | Error::Csv(_) => 2,
            Error::NonFinite { .. } => 3,
            _ => 1,
        }
    }
}
