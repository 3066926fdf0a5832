use thiserror::Error;

/// Errors surfaced by simulator components.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("parse error in {file} line {line}: {msg}")]
    Parse {
        file: String,
        line: u64,
        msg: String,
    },

    #[error("validation error in {file}: {msg}")]
    Validation { file: String, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("state error: {0}")]
    State(String),

    #[error("routing error: {0}")]
    Routing(String),

    #[error("initialization error: {0}")]
    Initialization(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(file: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            file: file.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
