use thiserror::Error;

pub type Result<T, E = QsvError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QsvError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("trace has imaginary part {0:e}; operand is not Hermitian")]
    NotHermitian(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    /// A certificate request outside the domain where the formula applies.
    #[error("certificate domain: {0}")]
    Domain(String),

    /// Something that the mathematics forbids happened; indicates a bug or
    /// floating-point breakdown rather than bad input.
    #[error("numerical consistency failure: {0}")]
    Numerical(String),

    #[error("oracle budget exceeded: {systems} systems (limit {limit})")]
    Budget { systems: usize, limit: usize },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl QsvError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        QsvError::InvalidParameter(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        QsvError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
