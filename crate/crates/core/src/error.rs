use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::PairId;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("pairs file references unknown record id \"{0}\"")]
    DanglingReference(String),
    #[error("duplicate record id \"{0}\"")]
    DuplicateRecord(String),
    #[error("not enough pairs: requested {requested}, corpus has {available}")]
    InsufficientPairs { requested: usize, available: usize },
    #[error("pair {0} is not in the unlabeled pool")]
    NotInPool(PairId),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("budget {budget} exceeds pool size {pool}")]
    BudgetTooLarge { budget: usize, pool: usize },
    #[error("enumeration of {count} subsets exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },
    #[error("unknown strategy \"{0}\"")]
    UnknownStrategy(String),
    #[error("loss is {value} on center {center}, expected 0")]
    NonZeroCenterLoss { center: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("pool exhausted at iteration {iteration}: {remaining} pairs left, budget {budget}")]
    PoolExhausted {
        iteration: usize,
        remaining: usize,
        budget: usize,
    },
    #[error("{0} already exists; pass force to overwrite")]
    WouldOverwrite(PathBuf),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
