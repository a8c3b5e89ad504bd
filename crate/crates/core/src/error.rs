use thiserror::Error;

/// Errors raised across the pretraining toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("class {class} would have zero samples ({detail})")]
    EmptyClass { class: usize, detail: String },

    #[error("zero-norm row {row} in similarity input")]
    ZeroNorm { row: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("training collapsed: {0}")]
    Collapse(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Process exit code for this failure: 2 for configuration problems,
    /// 3 for numeric failures and collapse, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numeric(_) | Error::Collapse(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
