use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown operator selector `{0}`")]
    UnknownSelector(String),

    #[error("Hamiltonian is not Hermitian at t = {time:e} s (deviation {deviation:e})")]
    NonHermitian { time: f64, deviation: f64 },

    #[error("integration diverged at t = {time:e} s: {reason}")]
    IntegrationDiverged { time: f64, reason: String },

    #[error("Liouvillian has no unique steady state (singular value ratio {ratio:e})")]
    NonUniqueSteadyState { ratio: f64 },

    #[error("steady state requires a time-independent Hamiltonian")]
    TimeDependentModel,

    #[error("limit cycle undefined: gain and damping rates are both zero")]
    UndefinedLimitCycle,

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("no phase preference: gain and damping rates are equal")]
    NoPhasePreference,

    #[error("zero contrast: {0}")]
    ZeroContrast(String),

    #[error("resolvent is singular for field `{field}` from level {level} (condition {condition:e})")]
    Resonance { field: String, level: usize, condition: f64 },

    #[error("jump operator {index} violates the target/auxiliary partition")]
    PartitionViolation { index: usize },

    #[error("inconsistent rotating frame: {0}")]
    InconsistentFrame(String),

    #[error("fit failed after {iterations} iterations: {reason}")]
    FitFailed { iterations: usize, reason: String },

    #[error("ill-conditioned measurement design (singular value ratio {ratio:e})")]
    IllConditionedDesign { ratio: f64 },

    #[error("no carrier at the reference frequency (amplitude {amplitude:e})")]
    NoCarrier { amplitude: f64 },

    #[error("invalid analysis window: {0}")]
    InvalidWindow(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
