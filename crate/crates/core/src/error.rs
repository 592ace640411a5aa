use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or configuration.
    Config,
    /// The data cannot support the requested computation.
    Data,
    /// An internal invariant was violated.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no valid records in input ({rejected} rows rejected)")]
    EmptyInput { rejected: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no receipt-token rule for protocol `{protocol}`")]
    NoRule { protocol: String },

    #[error("no base assets discovered: {0}")]
    NoBaseAssets(String),

    #[error("layering multiplier undefined: tier-0 TVL is zero")]
    UndefinedMultiplier,

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("panel is empty after filtering: {0}")]
    EmptyPanel(String),

    #[error("singular normal equations (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::NoRule { .. } => ErrorKind::Config,
            Error::Internal(_) => ErrorKind::Internal,
            Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::EmptyInput { .. }
            | Error::NoBaseAssets(_)
            | Error::UndefinedMultiplier
            | Error::Inconsistent(_)
            | Error::EmptyPanel(_)
            | Error::Singular { .. }
            | Error::Insufficient(_) => ErrorKind::Data,
        }
    }
}
