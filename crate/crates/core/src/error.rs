use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong between reading a light-curve and ranking it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("series is empty")]
    EmptySeries,
    #[error("period must be positive, got {0}")]
    NonPositivePeriod(f64),
    #[error("times must be strictly increasing (sample {index})")]
    UnorderedTimes { index: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("spike removal dropped {dropped} of {total} samples")]
    OverAggressiveRemoval { dropped: usize, total: usize },
    #[error("series has fewer than two distinct phases")]
    DegenerateSeries,
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("length {0} is not a power of two")]
    NonPowerOfTwoLength(usize),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid series {id}: {reason}")]
    InvalidSeries { id: String, reason: String },
    #[error("invalid preprocessing config: {0}")]
    InvalidConfig(String),

    #[error("input is empty")]
    EmptyInput,
    #[error("k = {k} exceeds the number of series ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("cluster state does not match the model: {0}")]
    InconsistentState(String),

    #[error("need at least {needed} series, got {got}")]
    TooFewSeries { needed: usize, got: usize },
    #[error("sample size {s} is out of range for {n} series")]
    SampleTooLarge { s: usize, n: usize },
    #[error("m = {m} is out of range for {n} entries")]
    MTooLarge { m: usize, n: usize },
    #[error("id {0} is missing from the candidate ranking")]
    MissingId(String),
    #[error("bad mixture spec: {0}")]
    BadSpec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("series {0} has no usable period")]
    MissingPeriod(String),
    #[error("config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code for the command-line driver: 2 for bad input or
    /// configuration, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ZeroVariance
            | Error::DegenerateSeries
            | Error::OverAggressiveRemoval { .. }
            | Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}
