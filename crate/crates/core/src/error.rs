use thiserror::Error;

/// Which of the two observed processes an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Process {
    X,
    Y,
}

impl std::fmt::Display for Process {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Process::X => f.write_str("X"),
            Process::Y => f.write_str("Y"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("process {process}: observation times must be strictly increasing (index {index}: {prev} then {next})")]
    Unsorted {
        process: Process,
        index: usize,
        prev: f64,
        next: f64,
    },

    #[error("process {process}: time {time} at index {index} is outside [0, {horizon}]")]
    OutOfRange {
        process: Process,
        index: usize,
        time: f64,
        horizon: f64,
    },

    #[error("process {process}: non-finite time or value at index {index}")]
    NonFinite { process: Process, index: usize },

    #[error("process {process} has {count} observations, at least {required} are needed")]
    TooFewObservations {
        process: Process,
        count: usize,
        required: usize,
    },

    #[error("the observation periods of X and Y do not overlap")]
    NoOverlap,

    #[error("process {process}: {values} values supplied for {times} observation times")]
    LengthMismatch {
        process: Process,
        times: usize,
        values: usize,
    },

    #[error("time {time} is not on the simulated grid")]
    MissingGridTime { time: f64 },

    #[error("coefficients cover [0, {covered}] but [0, {required}] is needed")]
    CoefficientCoverage { covered: f64, required: f64 },

    #[error("{needed} synchronized intervals are needed, only {available} available")]
    TooFewIntervals { needed: usize, available: usize },

    #[error("{bins} variance bins need at least {needed} synchronized intervals, only {available} available; lower the bin count (e.g. --bins {suggested})")]
    TooManyBins {
        bins: usize,
        needed: usize,
        available: usize,
        suggested: usize,
    },

    #[error("{failed} of {total} replications failed (first failure: {first})")]
    ReplicationFailures {
        failed: usize,
        total: usize,
        first: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
