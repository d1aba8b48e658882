use std::path::PathBuf;

/// Errors surfaced by every layer of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty subset: {0}")]
    EmptySubset(String),

    #[error("schema error: {0}")]
    SchemaError(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeError { expected: usize, actual: usize },

    #[error("non-finite value in {layer}")]
    NumericalOverflow { layer: String },

    #[error("zero direction vector")]
    ZeroDirection,

    #[error("dense oracle limited to {limit} parameters, model has {actual}")]
    OracleTooLarge { limit: usize, actual: usize },

    #[error("parameter layouts differ: {0}")]
    LayoutError(String),

    #[error("degenerate synthetic spec: {0}")]
    DegenerateSpec(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("gradient check failed at coordinate {coordinate}: analytic {analytic}, numeric {numeric}")]
    GradCheckFailure {
        coordinate: usize,
        analytic: f64,
        numeric: f64,
    },

    #[error("unsupported head: {0}")]
    UnsupportedHead(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("mitigation study failed: {0}")]
    StudyFailed(String),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
