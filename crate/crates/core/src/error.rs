use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("unknown distribution family `{0}`")]
    UnknownFamily(String),

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("symbol {symbol} has zero probability and no draw cap was given")]
    ZeroProbabilityUncapped { symbol: usize },

    #[error("symbol {symbol} is outside the alphabet of size {k}")]
    SymbolOutOfRange { symbol: usize, k: usize },

    #[error("sample budget exhausted after {draws} draws")]
    BudgetExceeded { draws: u64 },

    #[error("replayed stream exhausted after {draws} draws")]
    StreamExhausted { draws: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
