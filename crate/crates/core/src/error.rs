use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A matrix, vector or class count has the wrong size.
    InvalidDimension { what: &'static str, expected: usize, got: usize },
    /// A confusion-count row sums to zero and cannot be normalized.
    ZeroRow { grade: usize },
    /// Input values violate a type invariant (non-finite, out of range, ...).
    InvalidInput(String),
    /// A hyperparameter is outside its admissible range.
    InvalidHyperparameter { name: &'static str, value: f64 },
    /// An operation that needs data received none.
    EmptyInput(&'static str),
    /// A statistic is mathematically undefined for the given data.
    UndefinedStatistic(String),
    /// Too many bootstrap resamples produced an undefined metric.
    UnstableStatistic { metric: String, dropped: usize, total: usize },
    /// A loss became non-finite during training.
    TrainingDiverged { epoch: usize, batch: usize },
    /// A lambda-sweep run failed.
    AtLambda { lambda: f64, source: Box<Error> },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidDimension { what, expected, got } => {
                write!(f, "invalid dimension for {what}: expected {expected}, got {got}")
            }
            Error::ZeroRow { grade } => {
                write!(f, "confusion row for grade {grade} has zero total count")
            }
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::InvalidHyperparameter { name, value } => {
                write!(f, "invalid hyperparameter {name} = {value}")
            }
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::UndefinedStatistic(msg) => write!(f, "undefined statistic: {msg}"),
            Error::UnstableStatistic { metric, dropped, total } => write!(
                f,
                "metric {metric} undefined on {dropped} of {total} bootstrap resamples"
            ),
            Error::TrainingDiverged { epoch, batch } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}, batch {batch}")
            }
            Error::AtLambda { lambda, source } => write!(f, "lambda {lambda}: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::AtLambda { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}
