use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    #[error("grid must be strictly increasing (index {index})")]
    UnorderedGrid { index: usize },

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(&'static str),

    #[error("unequal trials per point ({first} vs {other})")]
    UnequalTrials { first: u64, other: u64 },

    #[error("no threshold keeps the double rate at or below {epsilon}")]
    NoAdmissibleThreshold { epsilon: f64 },

    #[error("event stream not sorted by time at index {index}")]
    Unsorted { index: usize },

    #[error("malformed tag stream: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
