use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("measurement refers to unknown object {id} (belief holds {count})")]
    UnknownObject { id: usize, count: usize },

    #[error("information matrix of object {0} is not positive definite")]
    NotPositiveDefinite(usize),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("invalid config: {field}: {constraint}")]
    ConfigInvalid { field: String, constraint: String },

    #[error("malformed log: {0}")]
    MalformedLog(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}
