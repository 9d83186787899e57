use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("trajectory diverged at step {step}: |x| = {magnitude:e} exceeds bound {bound:e}")]
    Divergence { step: usize, magnitude: f64, bound: f64 },

    #[error("non-finite reservoir state at step {step}")]
    NonFiniteState { step: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input data: {0}")]
    Input(String),

    #[error("reservoir construction failed: {0}; try a different seed")]
    Construction(String),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("spectral radius selection failed: {0}")]
    Selection(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 3 for numeric
    /// failures and 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) => 2,
            Error::Io(_) | Error::Json(_) | Error::Parse(_) => 4,
            _ => 3,
        }
    }
}
