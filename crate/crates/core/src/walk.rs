//! The walk coupled to the exclusion environment.
//!
//! Jumps are simulated by thinning: proposals arrive at rate 2, a proposal at
//! time `s` is accepted with probability `1 - lambda * xi_0(s-)` and moves the
//! walk one step left or right with equal probability. The occupancy under the
//! walk is piecewise constant, so the integrals of the functionals are summed
//! exactly over the segments between breakpoints (accepted jumps and
//! effective swaps on the two bonds touching the walker's site).
//!
//! Two pipelines produce bit-identical output for the same streams:
//! [`simulate_walk`] replays a stored [`EnvironmentEventLog`];
//! [`simulate_joint`] generates the environment on the fly. At equal times an
//! environment swap is processed before a walk proposal.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::lattice::LatticeConfiguration;
use crate::model::{LatticeSpec, ModelParams};
use crate::oracle::WindowConfiguration;
use crate::seed::{derive_stream, SeedSpec, SimRng};
use crate::ssep::{
    init_stationary, strictly_after, BondTimeline, EnvironmentEventLog, StirringDynamics, SwapEvent,
};
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Jump {
    pub time: f64,
    pub step: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkRealization {
    pub jumps: Vec<Jump>,
    pub horizon: f64,
    /// `X_T`, lifted to the integers.
    pub position: i64,
    pub max_abs_position: i64,
    pub jump_count: u64,
    /// Set when `max |X| >= L/2`.
    pub winding: bool,
}

/// Exact time integrals over `[0, T]` of `xi_0`, `2 - 2 lambda xi_0` and
/// `(2 - lambda xi_0)(xi_0 - rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FunctionalAccumulator {
    pub occ_integral: f64,
    pub qv_integral: f64,
    pub y_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkRun {
    pub realization: WalkRealization,
    pub functionals: FunctionalAccumulator,
}

/// Output of the single-pass pipeline; `log` is kept only on request.
#[derive(Debug, Clone, PartialEq)]
pub struct JointRun {
    pub log: Option<EnvironmentEventLog>,
    pub run: WalkRun,
}

/// Environment re-centred at the walker: `xi_k = eta_{x + k mod L}`.
pub struct EnvironmentView<'a> {
    config: &'a LatticeConfiguration,
    site: u32,
}

impl<'a> EnvironmentView<'a> {
    pub fn new(config: &'a LatticeConfiguration, position: i64) -> Self {
        let lattice = LatticeSpec {
            sites: config.len() as u32,
        };
        Self {
            config,
            site: lattice.wrap(position),
        }
    }

    #[inline]
    pub fn xi(&self, k: i64) -> bool {
        let sites = self.config.len() as i64;
        self.config
            .get((i64::from(self.site) + k).rem_euclid(sites) as u32)
    }

    /// Copies `xi_{-radius..=radius}` into an oracle window.
    pub fn window(&self, radius: usize) -> WindowConfiguration {
        let r = radius as i64;
        WindowConfiguration::new(-r, (-r..=r).map(|k| self.xi(k)).collect())
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Walker state shared by both pipelines.
struct Walker {
    params: ModelParams,
    lattice: LatticeSpec,
    rng: SimRng,
    proposals: Exp<f64>,
    position: i64,
    site: u32,
    occupied: bool,
    segment_start: f64,
    next_proposal: f64,
    occ: CompensatedSum,
    qv: CompensatedSum,
    y: CompensatedSum,
    jumps: Vec<Jump>,
    max_abs: i64,
}

impl Walker {
    fn new(params: ModelParams, lattice: LatticeSpec, mut rng: SimRng, occupied: bool) -> Self {
        let proposals = Exp::new(2.0).expect("positive rate");
        let next_proposal = strictly_after(0.0, proposals.sample(&mut rng));
        Self {
            params,
            lattice,
            rng,
            proposals,
            position: 0,
            site: 0,
            occupied,
            segment_start: 0.0,
            next_proposal,
            occ: CompensatedSum::default(),
            qv: CompensatedSum::default(),
            y: CompensatedSum::default(),
            jumps: Vec::new(),
            max_abs: 0,
        }
    }

    #[inline]
    fn left_bond(&self) -> u32 {
        if self.site == 0 {
            self.lattice.sites - 1
        } else {
            self.site - 1
        }
    }

    #[inline]
    fn touches(&self, bond: u32) -> bool {
        bond == self.site || bond == self.left_bond()
    }

    #[inline]
    fn close_segment(&mut self, until: f64) {
        let dt = until - self.segment_start;
        let ModelParams { rho, lambda } = self.params;
        let xi = if self.occupied { 1.0 } else { 0.0 };
        self.occ.add(xi * dt);
        self.qv.add((2.0 - 2.0 * lambda * xi) * dt);
        self.y.add((2.0 - lambda * xi) * (xi - rho) * dt);
        self.segment_start = until;
    }

    /// The occupancy under the walker flips at `time`.
    #[inline]
    fn environment_flip(&mut self, time: f64) {
        self.close_segment(time);
        self.occupied = !self.occupied;
    }

    /// Handles the pending proposal. Returns the new site if the walk moved;
    /// the caller must then refresh `occupied`.
    #[inline]
    fn propose(&mut self) -> Option<u32> {
        let time = self.next_proposal;
        let u: f64 = self.rng.random();
        let moved = if u < self.params.jump_rate(self.occupied) {
            let step: i8 = if self.rng.random::<bool>() { 1 } else { -1 };
            self.close_segment(time);
            self.position += i64::from(step);
            self.site = self.lattice.wrap(self.position);
            self.max_abs = self.max_abs.max(self.position.abs());
            self.jumps.push(Jump { time, step });
            Some(self.site)
        } else {
            None
        };
        self.next_proposal = strictly_after(time, time + self.proposals.sample(&mut self.rng));
        moved
    }

    fn finish(mut self, horizon: f64) -> Result<WalkRun, SimError> {
        self.close_segment(horizon);
        let winding = 2 * self.max_abs >= i64::from(self.lattice.sites);
        let run = WalkRun {
            realization: WalkRealization {
                jump_count: self.jumps.len() as u64,
                jumps: self.jumps,
                horizon,
                position: self.position,
                max_abs_position: self.max_abs,
                winding,
            },
            functionals: FunctionalAccumulator {
                occ_integral: self.occ.value(),
                qv_integral: self.qv.value(),
                y_integral: self.y.value(),
            },
        };
        if winding {
            Err(SimError::WindingOverflow(Box::new(run)))
        } else {
            Ok(run)
        }
    }
}

/// Next swap times on the two bonds touching the walker's site.
struct SiteCursor<'t> {
    left: &'t [f64],
    right: &'t [f64],
}

impl<'t> SiteCursor<'t> {
    fn new(timeline: &'t BondTimeline<'_>, site: u32, after: f64) -> Self {
        let left = timeline.bond_times(timeline.left_bond(site));
        let right = timeline.bond_times(site);
        Self {
            left: &left[left.partition_point(|&s| s <= after)..],
            right: &right[right.partition_point(|&s| s <= after)..],
        }
    }

    #[inline]
    fn peek(&self) -> f64 {
        let l = self.left.first().copied().unwrap_or(f64::INFINITY);
        let r = self.right.first().copied().unwrap_or(f64::INFINITY);
        l.min(r)
    }

    #[inline]
    fn advance(&mut self) {
        match (self.left.first(), self.right.first()) {
            (Some(l), Some(r)) if l <= r => self.left = &self.left[1..],
            (Some(_), None) => self.left = &self.left[1..],
            _ => self.right = &self.right[1..],
        }
    }
}

/// Replays the walk on a stored environment; `stream` is the walk stream.
pub fn simulate_walk_on(
    timeline: &BondTimeline<'_>,
    params: &ModelParams,
    stream: SimRng,
) -> Result<WalkRun, SimError> {
    params.validate()?;
    let log = timeline.log();
    let horizon = log.horizon;
    let mut walker = Walker::new(*params, log.lattice, stream, log.initial.get(0));
    let mut cursor = SiteCursor::new(timeline, 0, 0.0);
    loop {
        let next_env = cursor.peek();
        let next_proposal = walker.next_proposal;
        if next_env <= next_proposal && next_env <= horizon {
            walker.environment_flip(next_env);
            cursor.advance();
        } else if next_proposal <= horizon {
            if let Some(site) = walker.propose() {
                walker.occupied = timeline.occupancy_at(site, next_proposal);
                cursor = SiteCursor::new(timeline, site, next_proposal);
            }
        } else {
            break;
        }
    }
    walker.finish(horizon)
}

pub fn simulate_walk(
    log: &EnvironmentEventLog,
    params: &ModelParams,
    stream: SimRng,
) -> Result<WalkRun, SimError> {
    simulate_walk_on(&BondTimeline::new(log), params, stream)
}

/// Generates environment and walk in one pass. With `keep_log` the
/// environment log is returned as well; otherwise no events are stored.
pub fn simulate_joint(
    params: &ModelParams,
    lattice: LatticeSpec,
    horizon: f64,
    env_seed: SeedSpec,
    walk_seed: SeedSpec,
    keep_log: bool,
) -> Result<JointRun, SimError> {
    crate::model::validate(params, &lattice)?;
    let mut env_rng = derive_stream(&env_seed);
    let initial = init_stationary(params.rho, lattice, &mut env_rng);
    let mut events = Vec::new();
    let initial_copy = keep_log.then(|| initial.clone());
    let mut walker = Walker::new(*params, lattice, derive_stream(&walk_seed), initial.get(0));
    let mut dynamics = StirringDynamics::new(initial, env_rng);
    loop {
        let next_ring = dynamics.next_ring_time();
        let next_proposal = walker.next_proposal;
        if next_ring <= horizon && next_ring <= next_proposal {
            let ring = dynamics.fire();
            if keep_log && ring.effective {
                events.push(SwapEvent {
                    time: ring.time,
                    bond: ring.bond,
                });
            }
            if walker.touches(ring.bond) && ring.effective {
                walker.environment_flip(ring.time);
            }
        } else if next_proposal <= horizon {
            if let Some(site) = walker.propose() {
                walker.occupied = dynamics.config().get(site);
            }
        } else {
            break;
        }
    }
    let log = initial_copy.map(|initial| EnvironmentEventLog {
        lattice,
        rho: params.rho,
        horizon,
        seed: env_seed,
        initial,
        events,
    });
    walker.finish(horizon).map(|run| JointRun { log, run })
}

/// Sampled compensated jump martingale at `T`: `N_T - <X>_T`.
pub fn martingale_residual(realization: &WalkRealization, functionals: &FunctionalAccumulator) -> f64 {
    realization.jump_count as f64 - functionals.qv_integral
}

/// Reference integrals computed after the fact from a log and a realisation,
/// by replaying the whole lattice. Used by tests to check the streaming sums.
pub fn recompute_functionals(
    log: &EnvironmentEventLog,
    realization: &WalkRealization,
    params: &ModelParams,
) -> FunctionalAccumulator {
    let mut config = log.initial.clone();
    let mut position = 0i64;
    let mut since = 0.0;
    let (mut occ, mut time_total) = (0.0, 0.0);
    let mut events = log.events.iter().peekable();
    let mut jumps = realization.jumps.iter().peekable();
    let mut add = |config: &LatticeConfiguration, position: i64, until: f64, since: &mut f64| {
        let dt = until - *since;
        if EnvironmentView::new(config, position).xi(0) {
            occ += dt;
        }
        time_total += dt;
        *since = until;
    };
    loop {
        let next_event = events.peek().map_or(f64::INFINITY, |e| e.time);
        let next_jump = jumps.peek().map_or(f64::INFINITY, |j| j.time);
        if next_event.min(next_jump) > realization.horizon {
            break;
        }
        if next_event <= next_jump {
            add(&config, position, next_event, &mut since);
            config.swap_bond(events.next().expect("peeked").bond);
        } else {
            add(&config, position, next_jump, &mut since);
            position += i64::from(jumps.next().expect("peeked").step);
        }
    }
    add(&config, position, realization.horizon, &mut since);
    let ModelParams { rho, lambda } = *params;
    FunctionalAccumulator {
        occ_integral: occ,
        qv_integral: 2.0 * time_total - 2.0 * lambda * occ,
        y_integral: (2.0 - lambda + lambda * rho) * occ - 2.0 * rho * time_total,
    }
}
