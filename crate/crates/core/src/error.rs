use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated an operation's precondition.
    Argument(String),
    /// A configuration value is out of range; `field` names the offending key.
    Config { field: &'static str, reason: String },
    /// A variance on the diagonal of a covariance fell to (or below) the
    /// degeneracy threshold, so correlation normalization is undefined.
    DegenerateCovariance { index: usize, variance: f64 },
    /// No batch can be drawn with the requested shape.
    SamplingInfeasible(String),
    /// No trial can be built for the requested genre pair.
    TrialConstruction(String),
    /// A loss or parameter became non-finite during training.
    Divergence { step: usize, detail: String },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Argument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Config { field, reason } => write!(f, "invalid configuration `{field}`: {reason}"),
            Error::DegenerateCovariance { index, variance } => write!(
                f,
                "degenerate covariance: diagonal entry {index} has variance {variance:e}"
            ),
            Error::SamplingInfeasible(msg) => write!(f, "sampling infeasible: {msg}"),
            Error::TrialConstruction(msg) => write!(f, "trial construction failed: {msg}"),
            Error::Divergence { step, detail } => write!(f, "training diverged at step {step}: {detail}"),
        }
    }
}

impl core::error::Error for Error {}
