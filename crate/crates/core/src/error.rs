use alloc::string::String;

/// Errors raised by the core.
///
/// Variants split into two families: validation failures (bad instances,
/// bad schedules, misuse of an episode) and numerical failures (a simulator
/// or optimizer produced something that cannot be physical).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("out of scope: {0}")]
    OutOfScope(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{n} sites exceeds the statevector oracle limit of {max}")]
    TooLarge { n: usize, max: usize },
    #[error("energy {energy} outside the spectrum [{e_min}, {e_max}]")]
    EnergyOutOfRange { energy: f64, e_min: f64, e_max: f64 },
    #[error("episode already finished after {0} steps")]
    EpisodeFinished(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures that point at a numerical problem rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::EnergyOutOfRange { .. })
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
