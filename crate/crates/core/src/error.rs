use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fringe model for N={n}: {reason}")]
    InvalidModel { n: u64, reason: String },

    #[error("calibration document: {0}")]
    CalibrationParse(String),

    #[error("calibration entry N={n} violates probability bounds: {reason}")]
    CalibrationConstraint { n: u64, reason: String },

    #[error("no calibration entry for N={0}")]
    MissingCalibration(u64),

    #[error("invalid phase grid: {0}")]
    InvalidGrid(String),

    #[error("prior window parameter L must be finite and >= 1, got {0}")]
    InvalidPrior(f64),

    #[error("degenerate posterior: every grid weight is zero")]
    DegeneratePosterior,

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("malformed schedule literal at `{token}`: {reason}")]
    ScheduleSyntax { token: String, reason: String },

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trial {index} failed: {source}")]
    Trial {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by calibration input (missing entries, bad documents).
    pub fn is_calibration(&self) -> bool {
        match self {
            Error::CalibrationParse(_)
            | Error::CalibrationConstraint { .. }
            | Error::MissingCalibration(_) => true,
            Error::Trial { source, .. } => source.is_calibration(),
            _ => false,
        }
    }

    /// True for numerically degenerate outcomes (all-zero posteriors).
    pub fn is_degenerate(&self) -> bool {
        match self {
            Error::DegeneratePosterior => true,
            Error::Trial { source, .. } => source.is_degenerate(),
            _ => false,
        }
    }
}
