//! Stirring dynamics for the symmetric exclusion process on the torus.
//!
//! Every bond carries a rate-1 Poisson clock; at a ring the occupancies of the
//! two end sites are exchanged. The clocks are realised by superposition: ring
//! times form a rate-`L` Poisson process and each ring picks a uniform bond.
//! Only rings that change the configuration (occupancies differ across the
//! bond) are recorded.

mod format;
mod timeline;

pub use format::{read_log, write_log, LogFormatError};
pub use timeline::BondTimeline;

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::Exp;
use serde::Serialize;

use crate::lattice::LatticeConfiguration;
use crate::model::{LatticeSpec, ModelParams};
use crate::seed::{derive_stream, SeedSpec, SimRng};
use crate::stats::{self, ConfidenceLevel};
use crate::SimError;

/// An effective exchange across `bond` at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwapEvent {
    pub time: f64,
    pub bond: u32,
}

/// Replayable environment: initial configuration plus the ordered effective swaps.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentEventLog {
    pub lattice: LatticeSpec,
    pub rho: f64,
    pub horizon: f64,
    pub seed: SeedSpec,
    pub initial: LatticeConfiguration,
    pub events: Vec<SwapEvent>,
}

/// Outcome of one clock ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ring {
    pub time: f64,
    pub bond: u32,
    pub effective: bool,
}

/// Samples Bernoulli(`rho`) occupancies independently at every site.
pub fn init_stationary(rho: f64, lattice: LatticeSpec, rng: &mut SimRng) -> LatticeConfiguration {
    LatticeConfiguration::from_bits((0..lattice.sites).map(|_| rng.random::<f64>() < rho))
}

/// Returns the smallest time strictly after `previous` that is at least `candidate`.
#[inline]
pub(crate) fn strictly_after(previous: f64, candidate: f64) -> f64 {
    if candidate > previous {
        candidate
    } else {
        previous.next_up()
    }
}

/// The running exclusion process with its pending ring.
pub struct StirringDynamics {
    config: LatticeConfiguration,
    rng: SimRng,
    gap: Exp<f64>,
    bonds: Uniform<u32>,
    next_ring: f64,
}

impl StirringDynamics {
    pub fn new(config: LatticeConfiguration, mut rng: SimRng) -> Self {
        let sites = config.len() as u32;
        let gap = Exp::new(f64::from(sites)).expect("lattice has sites");
        let bonds = Uniform::new(0, sites).expect("lattice has sites");
        let next_ring = strictly_after(0.0, gap.sample(&mut rng));
        Self {
            config,
            rng,
            gap,
            bonds,
            next_ring,
        }
    }

    #[inline]
    pub fn next_ring_time(&self) -> f64 {
        self.next_ring
    }

    /// Fires the pending ring and schedules the next one.
    #[inline]
    pub fn fire(&mut self) -> Ring {
        let time = self.next_ring;
        let bond = self.bonds.sample(&mut self.rng);
        let effective = self.config.swap_bond(bond);
        self.next_ring = strictly_after(time, time + self.gap.sample(&mut self.rng));
        Ring {
            time,
            bond,
            effective,
        }
    }

    pub fn config(&self) -> &LatticeConfiguration {
        &self.config
    }

    pub fn into_config(self) -> LatticeConfiguration {
        self.config
    }
}

/// Runs the stirring dynamics from `initial` up to `horizon` and records
/// every effective swap. Also returns the configuration at `horizon`.
pub fn generate_log_with_final(
    initial: LatticeConfiguration,
    horizon: f64,
    rng: SimRng,
    rho: f64,
    seed: SeedSpec,
) -> (EnvironmentEventLog, LatticeConfiguration) {
    let lattice = LatticeSpec {
        sites: initial.len() as u32,
    };
    let mut events = Vec::new();
    let mut dynamics = StirringDynamics::new(initial.clone(), rng);
    while dynamics.next_ring_time() <= horizon {
        let ring = dynamics.fire();
        if ring.effective {
            events.push(SwapEvent {
                time: ring.time,
                bond: ring.bond,
            });
        }
    }
    debug_assert!(dynamics.config().count_is_consistent());
    let log = EnvironmentEventLog {
        lattice,
        rho,
        horizon,
        seed,
        initial,
        events,
    };
    (log, dynamics.into_config())
}

pub fn generate_log(
    initial: LatticeConfiguration,
    horizon: f64,
    rng: SimRng,
    rho: f64,
    seed: SeedSpec,
) -> EnvironmentEventLog {
    generate_log_with_final(initial, horizon, rng, rho, seed).0
}

/// Derives the environment stream for `seed`, samples the stationary initial
/// configuration and runs the dynamics to `horizon`.
pub fn sample_environment(
    rho: f64,
    lattice: LatticeSpec,
    horizon: f64,
    seed: SeedSpec,
) -> EnvironmentEventLog {
    let mut rng = derive_stream(&seed);
    let initial = init_stationary(rho, lattice, &mut rng);
    generate_log(initial, horizon, rng, rho, seed)
}

/// Configuration at time `t`: `initial` with all swaps of time `<= t` applied.
pub fn state_at(log: &EnvironmentEventLog, t: f64) -> Result<LatticeConfiguration, SimError> {
    if !(0.0..=log.horizon).contains(&t) {
        return Err(SimError::OutOfHorizon {
            time: t,
            horizon: log.horizon,
        });
    }
    let mut config = log.initial.clone();
    let applied = log.events.partition_point(|e| e.time <= t);
    for event in &log.events[..applied] {
        config.swap_bond(event.bond);
    }
    Ok(config)
}

/// Mean with its standard error and 99% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeEstimate {
    pub estimate: f64,
    pub se: f64,
    pub ci99: (f64, f64),
}

impl ProbeEstimate {
    pub fn contains(&self, value: f64) -> bool {
        self.ci99.0 <= value && value <= self.ci99.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityReport {
    /// Time-averaged occupancy of site 0.
    pub density: ProbeEstimate,
    /// Covariance of the occupancies of sites 0 and 1.
    pub covariance: ProbeEstimate,
}

/// Replicated check that the Bernoulli product measure stays invariant:
/// time averages of `eta_0` and `eta_0 eta_1` over `[0, horizon]`.
pub fn stationarity_probe(
    params: &ModelParams,
    lattice: LatticeSpec,
    horizon: f64,
    replicas: usize,
    master_seed: u64,
) -> Result<StationarityReport, SimError> {
    if replicas < 2 || horizon <= 0.0 {
        return Err(SimError::InvalidPlan(
            "stationarity probe needs horizon > 0 and at least 2 replicas".into(),
        ));
    }
    let last = lattice.sites - 1;
    let mut density = Vec::with_capacity(replicas);
    let mut pair = Vec::with_capacity(replicas);
    let mut neighbour = Vec::with_capacity(replicas);
    for r in 0..replicas {
        let seed = SeedSpec::environment(master_seed, r as u64);
        let mut rng = derive_stream(&seed);
        let initial = init_stationary(params.rho, lattice, &mut rng);
        let mut dynamics = StirringDynamics::new(initial, rng);
        let (mut occ0, mut occ01, mut occ1) = (0.0, 0.0, 0.0);
        let mut since = 0.0;
        let mut pair_now = (dynamics.config().get(0), dynamics.config().get(1));
        let mut close = |(a, b): (bool, bool), until: f64, since: &mut f64| {
            let dt = until - *since;
            occ0 += f64::from(u8::from(a)) * dt;
            occ1 += f64::from(u8::from(b)) * dt;
            occ01 += f64::from(u8::from(a && b)) * dt;
            *since = until;
        };
        while dynamics.next_ring_time() <= horizon {
            let ring = dynamics.fire();
            // Only bonds `last`, 0 and 1 touch sites 0 and 1.
            if ring.effective && (ring.bond <= 1 || ring.bond == last) {
                close(pair_now, ring.time, &mut since);
                pair_now = (dynamics.config().get(0), dynamics.config().get(1));
            }
        }
        close(pair_now, horizon, &mut since);
        density.push(occ0 / horizon);
        neighbour.push(occ1 / horizon);
        pair.push(occ01 / horizon);
    }
    let level = ConfidenceLevel::P99;
    let (d_mean, d_half) = stats::mean_ci(&density, level)?;
    let n_mean = density_mean(&neighbour);
    let centred: Vec<f64> = pair.iter().map(|p| p - d_mean * n_mean).collect();
    let (c_mean, c_half) = stats::mean_ci(&centred, level)?;
    let z = level.z();
    Ok(StationarityReport {
        density: ProbeEstimate {
            estimate: d_mean,
            se: d_half / z,
            ci99: (d_mean - d_half, d_mean + d_half),
        },
        covariance: ProbeEstimate {
            estimate: c_mean,
            se: c_half / z,
            ci99: (c_mean - c_half, c_mean + c_half),
        },
    })
}

fn density_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
