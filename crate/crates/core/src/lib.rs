//! Simulation and diagnostics for a continuous-time random walk on a torus
//! whose jump rate is slowed to `1 - lambda` per neighbour while it sits on a
//! particle of a stationary stirring (symmetric exclusion) environment.
//!
//! The environment is generated as a replayable log of effective swaps, the
//! walk is layered on top by thinning, and every run carries exact integrals
//! of its occupation time, predictable quadratic variation and centred drift
//! functional. The [`oracle`] module checks the generator identities behind
//! the correctors exactly over all configurations of a finite window.

pub mod estimators;
pub mod lattice;
pub mod model;
pub mod oracle;
pub mod report;
pub mod seed;
pub mod ssep;
pub mod stats;
pub mod walk;

use thiserror::Error;

pub use estimators::{run_annealed, run_quenched, EstimateReport, ExperimentPlan, QuenchedReport};
pub use lattice::LatticeConfiguration;
pub use report::{EstimateEntry, RunRow, Verdict};
pub use model::{theoretical_targets, LatticeSpec, ModelError, ModelParams, TheoreticalTargets};
pub use seed::{derive_stream, SeedSpec, SimRng};
pub use ssep::{read_log, write_log, EnvironmentEventLog, LogFormatError, SwapEvent};
pub use stats::StatsError;
pub use walk::{
    simulate_joint, simulate_walk, FunctionalAccumulator, JointRun, WalkRealization, WalkRun,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("time {time} outside [0, {horizon}]")]
    OutOfHorizon { time: f64, horizon: f64 },
    #[error("walk reached |X| = {} and wrapped around the torus", .0.realization.max_abs_position)]
    WindingOverflow(Box<WalkRun>),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}
