use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or input value violates a documented constraint.
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension { context: &'static str, expected: usize, actual: usize },

    #[error("model wiring: {0}")]
    Wiring(String),

    #[error("non-finite loss at sample {sample_id}")]
    NonFiniteLoss { sample_id: usize },

    #[error("cannot evaluate modality {modality} of sample {sample_id}: input is masked")]
    MaskedModality { sample_id: usize, modality: usize },

    #[error("partition: {0}")]
    Partition(String),

    #[error("unsupported schema version {found} (expected major {expected})")]
    Schema { found: String, expected: u32 },

    /// Training stopped early; carries the partial run and what was being
    /// processed.
    #[error("run aborted at epoch {}: {}", .0.context.epoch, .0.cause)]
    Aborted(Box<crate::record::AbortReport>),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), reason: reason.into() }
    }
}
