use alloc::boxed::Box;
use alloc::string::String;

/// Errors produced by the simulation, filtering and estimation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("Bloch vector of length {radius} lies outside the unit ball")]
    OutsideBlochBall { radius: f64 },

    #[error("density matrix is not a valid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),

    #[error("record has negligible probability (log normalization {log_norm})")]
    ImpossibleRecord { log_norm: f64 },

    #[error("step {index} failed: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("record does not match channel configuration: {0}")]
    RecordMismatch(String),

    #[error("channel {channel} has zero efficiency; mark it dephasing-only to generate records")]
    ZeroEfficiency { channel: usize },

    #[error("requested time {time} is not a multiple of the step {dt}")]
    NotMultipleOfDt { time: f64, dt: f64 },

    #[error("composite map underflowed despite rescaling")]
    Underflow,

    #[error("transfer map yields non-positive probability {0}")]
    NonPositiveProbability(f64),

    #[error("no measurement maps supplied")]
    NoMaps,

    #[error("optimizer did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("time step violates the stability bound (Courant number {courant:.3})")]
    Cfl { courant: f64 },

    #[error("implicit step matrix could not be factored")]
    SingularSystem,

    #[error("distribution has mass {mass} outside the unit disk")]
    MassOffDisk { mass: f64 },

    #[error("no samples fall inside the selection ring")]
    EmptyRing,

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("protocol precondition violated: {0}")]
    Protocol(&'static str),

    #[error("records have zero variance")]
    ZeroVariance,

    #[error("Fock-space truncation leak: top-level population {population:e}")]
    TruncationLeak { population: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
