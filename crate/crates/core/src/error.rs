use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("candidate index {index} out of range for {k} candidates")]
    IndexOutOfRange { index: usize, k: usize },

    #[error("candidate {0} cannot duel itself")]
    SelfDuel(usize),

    #[error("invalid preference matrix: {0}")]
    InvalidMatrix(String),

    #[error("degenerate theory constant: {0}")]
    DegenerateConstant(String),

    #[error("annotation failure: {0}")]
    Annotation(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// True for failures caused by unreadable or malformed input data, as
    /// opposed to bad configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::InvalidMatrix(_)
        )
    }
}
