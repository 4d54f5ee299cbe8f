use egno_core::CoreError;
use egno_tensor::TensorError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("invalid run configuration: {0}")]
    Config(String),

    #[error("unknown model variant `{name}` (known: {known})")]
    UnknownVariant { name: String, known: String },

    /// Dataset, model and checkpoint disagree on a shape parameter.
    #[error("{what} mismatch: {expected} expected, found {found}")]
    Mismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("reading config {path}: {source}")]
    Toml {
        path: String,
        source: toml::de::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub(crate) fn mismatch(what: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Self::Mismatch {
            what,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
