use thiserror::Error;

/// Errors raised by the fitting, simulation and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("signal must contain at least one sample")]
    EmptySignal,
    #[error("time and value vectors differ in length ({times} vs {values})")]
    LengthMismatch { times: usize, values: usize },
    #[error("time is not strictly increasing at index {index}")]
    NonMonotonicTime { index: usize },
    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },
    #[error("weighted design is rank deficient (rank {rank} < {required})")]
    RankDeficient { rank: usize, required: usize },
    #[error("segment ]{start}, {end}] is shorter than the minimum length {min_len}")]
    SegmentTooShort {
        start: usize,
        end: usize,
        min_len: usize,
    },
    #[error("cannot split {n} samples into {segments} segments of at least {min_len} samples")]
    Infeasible {
        n: usize,
        segments: usize,
        min_len: usize,
    },
    #[error("component {component} lost all posterior mass at EM iteration {iteration}")]
    EmptyComponent { component: usize, iteration: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that come from the numerics rather than from the
    /// caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. } | Error::EmptyComponent { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
