use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (parameter out of range, inconsistent sizes).
    #[error("config: {0}")]
    Config(String),

    /// Malformed trace, ground-truth or report data.
    #[error("data: {0}")]
    Data(String),

    /// Training input rejected (e.g. a trace with fault activity).
    #[error("train: {0}")]
    Train(String),

    /// Model file rejected (bad magic, wrong version, missing entry).
    #[error("model: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Bin(#[from] bincode::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
