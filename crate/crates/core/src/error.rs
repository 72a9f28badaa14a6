use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A prediction put zero mass on a label the target requires.
    #[error("cross-entropy undefined: prediction has zero mass on class {class}")]
    Domain { class: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid simplex vector: {0}")]
    InvalidSimplex(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("conditional context sampling exhausted {attempts} attempts")]
    RejectionCapExceeded { attempts: usize },

    #[error("label {0} belongs to neither the high- nor the low-frequency class set")]
    UnknownLabel(usize),

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("ledger is empty")]
    EmptyLedger,

    #[error("insufficient samples: need at least {needed}, have {have}")]
    InsufficientSamples { needed: usize, have: usize },

    #[error("entropy threshold undefined: error floor {floor} is not below log 2")]
    ThresholdUndefined { floor: f64 },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
