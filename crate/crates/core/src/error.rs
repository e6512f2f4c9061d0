use thiserror::Error;

/// Errors raised anywhere in the toxnet core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("unknown symptom(s): {}", .0.join(", "))]
    UnknownSymptoms(Vec<String>),

    #[error("case {0:?} has no symptoms")]
    NoSymptoms(String),

    #[error("unknown value {value:?} for meta field {field}")]
    UnknownCategory { field: &'static str, value: String },

    #[error("unknown toxin {0:?}")]
    UnknownToxin(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid synthetic spec: {0}")]
    SynthSpec(String),

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("unknown variant {0:?}")]
    UnknownVariant(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
