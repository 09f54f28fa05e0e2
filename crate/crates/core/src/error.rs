use thiserror::Error;

/// Errors produced anywhere in the filtering pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semi-definite (pivot {pivot:e} at index {index})")]
    NotPositiveSemiDefinite { pivot: f64, index: usize },

    #[error("covariance factor is singular (pivot {pivot:e} at index {index})")]
    SingularFactor { pivot: f64, index: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ODE solver exceeded {max_steps} steps at t = {t}")]
    MaxStepsExceeded { max_steps: usize, t: f64 },

    #[error("ODE step size {h:e} underflowed at t = {t}")]
    StepUnderflow { t: f64, h: f64 },

    #[error("model is missing required derivatives: {0}")]
    MissingDerivatives(&'static str),

    #[error("innovation covariance factor is degenerate")]
    DegenerateInnovationCovariance,

    #[error("target is at the radar station (zero horizontal range)")]
    AtStationSingularity,

    #[error("all trials diverged; RMSE is undefined")]
    AllTrialsDivergent,

    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),

    #[error("time-update from t = {from} to t = {to} failed: {source}")]
    TimeUpdate {
        from: f64,
        to: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("callback failed with code {0}")]
    Callback(i32),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Errors an adaptive step may recover from by shrinking the step.
    pub fn is_recoverable(&self) -> bool {
        match self {
            Error::SingularFactor { .. } | Error::NonFinite(_) => true,
            Error::TimeUpdate { source, .. } => source.is_recoverable(),
            _ => false,
        }
    }

    /// Strips any time-update context.
    pub fn root(&self) -> &Error {
        match self {
            Error::TimeUpdate { source, .. } => source.root(),
            other => other,
        }
    }
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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
