//! Simulation of incentivized exploration in multi-armed bandits where the
//! compensation paid to a myopic player drifts the feedback it reports.
//!
//! The crate is organized by role: [`model`] holds the environment and state,
//! [`policy`] the arm-selection rules, [`mechanism`] the per-round protocol,
//! [`analysis`] the closed-form bounds and per-run metrics, [`experiment`] the
//! replicated sweeps, [`output`] the file formats and [`cli`] the binary.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod mechanism;
pub mod model;
pub mod output;
pub mod policy;
pub mod rng;

pub use analysis::{summarize, BoundInputs, BoundTable, SummaryMetrics};
pub use error::{Result, SimError};
pub use experiment::{derive_seed, run_experiment, AggregateResult, ExperimentConfig};
pub use mechanism::{run, run_on, run_with, MechanismOptions, RoundRecord, Trajectory};
pub use model::{ArmState, BanditInstance, DriftKind, DriftModel, Noise, SimState};
pub use policy::PolicyKind;
pub use rng::{RandomSource, ScriptedStream, SeededStream};
