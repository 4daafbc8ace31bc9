use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),

    #[error("tensor file: bad magic bytes")]
    BadMagic,
    #[error("tensor file: unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("tensor file: {0}")]
    Format(String),
    #[error("tensor file: payload truncated ({0})")]
    Truncated(String),

    #[error("schedule invalid: {0}")]
    ScheduleInvalid(String),
    #[error("brute-force search refused: {0} permutations exceed the limit of {1}")]
    SearchLimit(u128, u128),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
