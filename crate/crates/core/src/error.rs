use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. Variants are grouped by the
/// category the CLI maps onto an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {detail}")]
    Dimension { context: String, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid graph state: {0}")]
    State(String),

    #[error("optimizer error on parameter {param}: {detail}")]
    Optimizer { param: usize, detail: String },

    #[error("integration blew up in {env}: {detail}")]
    Integration { env: String, detail: String },

    #[error("rollout diverged at step {step}")]
    RolloutDivergence { step: usize },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    TrainingDivergence { epoch: usize, loss: f64 },

    #[error("model is not stabilizable: {0}")]
    Unstabilizable(String),

    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{kind} not found: {}", path.display())]
    NotFound { kind: &'static str, path: PathBuf },

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
