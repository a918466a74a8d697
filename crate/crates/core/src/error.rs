use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("insufficient support: {0}")]
    Support(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("leaf {leaf} has no estimate (n_treat={n_treat}, n_control={n_control})")]
    Unavailable {
        leaf: usize,
        n_treat: usize,
        n_control: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line tool: 2 for input problems, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
