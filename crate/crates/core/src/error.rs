use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("a bandit instance needs at least 2 arms, got {0}")]
    TooFewArms(usize),

    #[error("arm {arm} has mean {mean}, expected a finite value in [0, 1]")]
    MeanOutOfRange { arm: usize, mean: f64 },

    #[error("arms {first} and {second} share the maximal mean; the optimum must be unique")]
    NonUniqueOptimum { first: usize, second: usize },

    #[error("gaussian noise scale must be finite and nonnegative, got {0}")]
    InvalidNoise(f64),

    #[error("drift model parameter `{name}` must be finite and nonnegative, got {value}")]
    InvalidDrift { name: &'static str, value: f64 },

    #[error("drift applied to negative compensation {0}")]
    NegativeCompensation(f64),

    #[error("arm index {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },

    #[error("statistic undefined: arm {0} has never been pulled")]
    NoPulls(usize),

    #[error("warm start incomplete: arm {0} has no pulls yet")]
    WarmStartIncomplete(usize),

    #[error("warm start requires a fresh state (round 1, no pulls)")]
    StateNotFresh,

    #[error("horizon {horizon} is shorter than the number of arms {arms}")]
    HorizonTooShort { horizon: u64, arms: usize },

    #[error("scripted random stream exhausted: draw #{requested} requested but only {supplied} values supplied")]
    ScriptExhausted { requested: usize, supplied: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid bound inputs: {0}")]
    InvalidBoundInputs(String),

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("run failed for policy #{policy} ({label}), l index {l_index}, replication {rep}: {source}")]
    RunFailed {
        policy: usize,
        label: String,
        l_index: usize,
        rep: usize,
        source: Box<SimError>,
    },
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
