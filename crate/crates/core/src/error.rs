use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("alphabet mismatch: {0} vs {1}")]
    AlphabetMismatch(usize, usize),

    #[error("invalid distribution: {0}")]
    InvalidDist(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{what} needs {needed}, cap is {cap}")]
    Cap {
        what: &'static str,
        needed: u128,
        cap: u128,
    },

    #[error("bin {0} is empty")]
    EmptyBin(u128),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
