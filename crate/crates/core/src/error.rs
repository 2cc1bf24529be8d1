use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, dimensions or settings that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A computation produced (or was fed) NaN or infinity.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed checkpoint stream.
    #[error("parse error in entry `{entry}` at byte {offset}: {message}")]
    Parse {
        entry: String,
        offset: usize,
        message: String,
    },

    #[error("invalid episode: {0}")]
    InvalidEpisode(String),

    /// API misuse, e.g. stepping an environment that already finished.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
