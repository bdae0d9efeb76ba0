//! Replicated experiments and the estimates built from them.
//!
//! Replica `i` of an annealed experiment uses environment stream `i` and walk
//! stream `2^32 + i`. In quenched mode environment `e` uses stream `e` and its
//! walk `w` uses walk stream `e * W + w`. Replicas run on the rayon pool and
//! are collected in index order, so results do not depend on scheduling.

mod probes;

pub use probes::{
    decoupling_probe, poisson_jump_bound_moment, poisson_walk_sixth_moment, rate_probe, sixth_moment_probe,
    BoxFunctional, DecouplingPlan, DecouplingReport, DecouplingRow, RateProbeReport, RateRow,
    SixthMomentReport, SixthMomentRow, DOOB_L6_CONSTANT,
};

use rayon::prelude::*;
use serde::Serialize;

use crate::model::{theoretical_targets, LatticeSpec, ModelParams};
use crate::report::{EstimateEntry, RunRow, Tolerance, Verdict};
use crate::seed::{derive_stream, SeedSpec};
use crate::ssep::{sample_environment, BondTimeline};
use crate::stats::{self, KsResult, SampleSummary};
use crate::walk::{simulate_joint, simulate_walk, simulate_walk_on, WalkRun};
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Annealed,
    Quenched { environments: usize, walks_per_env: usize },
}

/// How environment and walk are produced for annealed replicas. Both give
/// identical output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Environment and walk in one pass; no log is stored.
    Streaming,
    /// Environment log first, then the walk replayed on it.
    TwoPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub occupation_fraction: Tolerance,
    pub qv_rate: Tolerance,
    pub variance_rate: Tolerance,
    pub mean_position: Tolerance,
    pub second_moment_minus_qv: Tolerance,
    pub compensated_jumps: Tolerance,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            occupation_fraction: Tolerance::Absolute(0.01),
            qv_rate: Tolerance::Relative(0.01),
            variance_rate: Tolerance::Relative(0.05),
            mean_position: Tolerance::StdErrors(4.0),
            second_moment_minus_qv: Tolerance::StdErrors(4.0),
            compensated_jumps: Tolerance::StdErrors(4.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentPlan {
    pub params: ModelParams,
    pub lattice: LatticeSpec,
    pub horizon: f64,
    pub replicas: usize,
    pub mode: Mode,
    pub master_seed: u64,
    pub pipeline: Pipeline,
    /// Horizons for the rate probe.
    pub t_grid: Vec<f64>,
    pub tolerances: Tolerances,
}

impl ExperimentPlan {
    pub fn annealed(params: ModelParams, lattice: LatticeSpec, horizon: f64, replicas: usize, master_seed: u64) -> Self {
        Self {
            params,
            lattice,
            horizon,
            replicas,
            mode: Mode::Annealed,
            master_seed,
            pipeline: Pipeline::Streaming,
            t_grid: Vec::new(),
            tolerances: Tolerances::default(),
        }
    }

    pub fn quenched(
        params: ModelParams,
        lattice: LatticeSpec,
        horizon: f64,
        environments: usize,
        walks_per_env: usize,
        master_seed: u64,
    ) -> Self {
        Self {
            replicas: environments * walks_per_env,
            mode: Mode::Quenched {
                environments,
                walks_per_env,
            },
            pipeline: Pipeline::TwoPhase,
            ..Self::annealed(params, lattice, horizon, environments * walks_per_env, master_seed)
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        crate::model::validate(&self.params, &self.lattice)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::InvalidPlan(format!("horizon must be positive, got {}", self.horizon)));
        }
        match self.mode {
            Mode::Annealed if self.replicas < 2 => {
                Err(SimError::InvalidPlan("at least 2 replicas are needed".into()))
            }
            Mode::Quenched {
                environments,
                walks_per_env,
            } if environments < 2 || walks_per_env < 2 => Err(SimError::InvalidPlan(
                "quenched mode needs at least 2 environments and 2 walks per environment".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Turns a winding overflow into a flagged run; other errors pass through.
fn keep_wound(result: Result<WalkRun, SimError>) -> Result<WalkRun, SimError> {
    match result {
        Err(SimError::WindingOverflow(run)) => Ok(*run),
        other => other,
    }
}

/// One annealed replica.
pub fn annealed_replica(plan: &ExperimentPlan, index: u64) -> Result<WalkRun, SimError> {
    let env = SeedSpec::environment(plan.master_seed, index);
    let walk = SeedSpec::walk(plan.master_seed, index);
    keep_wound(match plan.pipeline {
        Pipeline::Streaming => {
            simulate_joint(&plan.params, plan.lattice, plan.horizon, env, walk, false).map(|joint| joint.run)
        }
        Pipeline::TwoPhase => {
            let log = sample_environment(plan.params.rho, plan.lattice, plan.horizon, env);
            simulate_walk(&log, &plan.params, derive_stream(&walk))
        }
    })
}

/// Runs every annealed replica; rows are in replica order.
pub fn annealed_rows(plan: &ExperimentPlan) -> Result<Vec<RunRow>, SimError> {
    plan.validate()?;
    (0..plan.replicas as u64)
        .into_par_iter()
        .map(|i| annealed_replica(plan, i).map(|run| RunRow::new(i, i, &run)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub params: ModelParams,
    pub horizon: f64,
    pub replicas: usize,
    /// Runs entering the estimates (all minus the wound ones).
    pub used: usize,
    pub winding_count: usize,
    pub entries: Vec<EstimateEntry>,
    /// KS test of `X_T / sqrt(sigma^2 T)` against N(0, 1); absent when
    /// `sigma^2 = 0` or too few runs.
    pub ks: Option<KsResult>,
    pub ks_verdict: Verdict,
}

impl EstimateReport {
    pub fn entry(&self, quantity: &str) -> Option<&EstimateEntry> {
        self.entries.iter().find(|e| e.quantity == quantity)
    }
}

/// Significance level of the KS verdict.
pub const KS_ALPHA: f64 = 0.01;

fn mean_se(samples: &[f64]) -> Result<(f64, f64), SimError> {
    let s = SampleSummary::from_slice(samples)?;
    Ok((s.mean, s.std_error()))
}

/// Estimates from a set of annealed rows. Wound runs are counted and left out.
pub fn summarize(
    params: &ModelParams,
    horizon: f64,
    rows: &[RunRow],
    tolerances: &Tolerances,
) -> Result<EstimateReport, SimError> {
    let used: Vec<&RunRow> = rows.iter().filter(|r| !r.winding).collect();
    let n = used.len();
    if n < 2 {
        return Err(SimError::Stats(stats::StatsError::TooFewSamples { needed: 2, got: n }));
    }
    let targets = theoretical_targets(params);
    let t = horizon;
    let column = |f: &dyn Fn(&RunRow) -> f64| used.iter().map(|r| f(r)).collect::<Vec<f64>>();

    let occ = column(&|r| r.occ_integral / t);
    let qv = column(&|r| r.qv_integral / t);
    let x = column(&|r| r.position as f64);
    let y = column(&|r| r.y_integral / t);
    let x2_minus_qv = column(&|r| (r.position as f64).powi(2) - r.qv_integral);
    let compensated = column(&|r| r.jump_count as f64 - r.qv_integral);
    let sixth = column(&|r| (r.position as f64).powi(6) / t.powi(3));

    let mut entries = Vec::new();
    let (m, se) = mean_se(&occ)?;
    entries.push(EstimateEntry::new(
        "occupation_fraction",
        m,
        se,
        Some(targets.occ_limit),
        Some(tolerances.occupation_fraction),
    ));
    let (m, se) = mean_se(&qv)?;
    entries.push(EstimateEntry::new("qv_rate", m, se, Some(targets.sigma_sq), Some(tolerances.qv_rate)));

    let xs = SampleSummary::from_slice(&x)?;
    let m2 = x.iter().map(|v| (v - xs.mean).powi(2)).sum::<f64>() / n as f64;
    let m4 = x.iter().map(|v| (v - xs.mean).powi(4)).sum::<f64>() / n as f64;
    let var_se = ((m4 - m2 * m2).max(0.0) / n as f64).sqrt();
    entries.push(EstimateEntry::new(
        "variance_rate",
        xs.variance / t,
        var_se / t,
        Some(targets.sigma_sq),
        Some(tolerances.variance_rate),
    ));
    entries.push(EstimateEntry::new(
        "mean_position",
        xs.mean,
        xs.std_error(),
        Some(0.0),
        Some(tolerances.mean_position),
    ));
    let (m, se) = mean_se(&x2_minus_qv)?;
    entries.push(EstimateEntry::new(
        "second_moment_minus_qv",
        m,
        se,
        Some(0.0),
        Some(tolerances.second_moment_minus_qv),
    ));
    let (m, se) = mean_se(&compensated)?;
    entries.push(EstimateEntry::new(
        "compensated_jumps",
        m,
        se,
        Some(0.0),
        Some(tolerances.compensated_jumps),
    ));
    let (m, se) = mean_se(&y)?;
    entries.push(EstimateEntry::new("y_rate", m, se, None, None));
    let (m, se) = mean_se(&sixth)?;
    entries.push(EstimateEntry::new("sixth_moment_ratio", m, se, None, None));

    let ks = if targets.sigma_sq > 0.0 {
        let scale = (targets.sigma_sq * t).sqrt();
        let z: Vec<f64> = x.iter().map(|v| v / scale).collect();
        stats::ks_normal(&z).ok()
    } else {
        None
    };
    let ks_verdict = match ks {
        Some(k) if k.p_value >= KS_ALPHA => Verdict::Pass,
        Some(_) => Verdict::Fail,
        None => Verdict::NotApplicable,
    };
    Ok(EstimateReport {
        params: *params,
        horizon,
        replicas: rows.len(),
        used: n,
        winding_count: rows.len() - n,
        entries,
        ks,
        ks_verdict,
    })
}

/// Annealed experiment: rows plus their report.
pub fn run_annealed(plan: &ExperimentPlan) -> Result<(EstimateReport, Vec<RunRow>), SimError> {
    if plan.mode != Mode::Annealed {
        return Err(SimError::InvalidPlan("run_annealed needs an annealed plan".into()));
    }
    let rows = annealed_rows(plan)?;
    let report = summarize(&plan.params, plan.horizon, &rows, &plan.tolerances)?;
    Ok((report, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvironmentSummary {
    pub env_id: u64,
    pub walks_used: usize,
    pub winding_count: usize,
    pub occ_mean: f64,
    pub occ_se: f64,
    pub y_mean: f64,
    pub y_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuenchedReport {
    pub params: ModelParams,
    pub horizon: f64,
    pub environments: usize,
    pub walks_per_env: usize,
    pub per_env: Vec<EnvironmentSummary>,
    /// Standard deviation of the per-environment means of `occ/T`.
    pub occ_dispersion: f64,
    pub y_dispersion: f64,
    /// Average within-environment standard error of `occ/T`.
    pub occ_within_se: f64,
    pub y_within_se: f64,
    /// All walks pooled; the standard error treats environments as clusters.
    pub pooled_occupation: EstimateEntry,
    pub winding_count: usize,
}

/// Mean over all walks and its cluster-robust standard error
/// `sqrt(E/(E-1) * sum n_e^2 (m_e - m)^2) / N`.
fn cluster_mean_se(per_env: &[EnvironmentSummary]) -> (f64, f64) {
    let total: usize = per_env.iter().map(|s| s.walks_used).sum();
    let n = total as f64;
    let mean = per_env.iter().map(|s| s.walks_used as f64 * s.occ_mean).sum::<f64>() / n;
    let clusters = per_env.len() as f64;
    let spread: f64 = per_env
        .iter()
        .map(|s| (s.walks_used as f64 * (s.occ_mean - mean)).powi(2))
        .sum();
    (mean, (clusters / (clusters - 1.0) * spread).sqrt() / n)
}

/// Quenched experiment: one stored environment per index, shared by its walks.
pub fn run_quenched(plan: &ExperimentPlan) -> Result<(QuenchedReport, Vec<RunRow>), SimError> {
    let Mode::Quenched {
        environments,
        walks_per_env,
    } = plan.mode
    else {
        return Err(SimError::InvalidPlan("run_quenched needs a quenched plan".into()));
    };
    plan.validate()?;
    let t = plan.horizon;
    let mut rows = Vec::with_capacity(environments * walks_per_env);
    let mut per_env = Vec::with_capacity(environments);
    for e in 0..environments as u64 {
        let log = sample_environment(
            plan.params.rho,
            plan.lattice,
            t,
            SeedSpec::environment(plan.master_seed, e),
        );
        let timeline = BondTimeline::new(&log);
        let env_rows: Vec<RunRow> = (0..walks_per_env as u64)
            .into_par_iter()
            .map(|w| {
                let seed = SeedSpec::walk(plan.master_seed, e * walks_per_env as u64 + w);
                keep_wound(simulate_walk_on(&timeline, &plan.params, derive_stream(&seed)))
                    .map(|run| RunRow::new(w, e, &run))
            })
            .collect::<Result<_, _>>()?;
        let used: Vec<&RunRow> = env_rows.iter().filter(|r| !r.winding).collect();
        let occ: Vec<f64> = used.iter().map(|r| r.occ_integral / t).collect();
        let y: Vec<f64> = used.iter().map(|r| r.y_integral / t).collect();
        let (occ_mean, occ_se) = mean_se(&occ)?;
        let (y_mean, y_se) = mean_se(&y)?;
        per_env.push(EnvironmentSummary {
            env_id: e,
            walks_used: used.len(),
            winding_count: env_rows.len() - used.len(),
            occ_mean,
            occ_se,
            y_mean,
            y_se,
        });
        rows.extend(env_rows);
    }
    let occ_means: Vec<f64> = per_env.iter().map(|s| s.occ_mean).collect();
    let y_means: Vec<f64> = per_env.iter().map(|s| s.y_mean).collect();
    let occ_dispersion = SampleSummary::from_slice(&occ_means)?.variance.sqrt();
    let y_dispersion = SampleSummary::from_slice(&y_means)?.variance.sqrt();
    let envs = per_env.len() as f64;
    let occ_within_se = per_env.iter().map(|s| s.occ_se).sum::<f64>() / envs;
    let y_within_se = per_env.iter().map(|s| s.y_se).sum::<f64>() / envs;

    let (m, se) = cluster_mean_se(&per_env);
    let pooled_occupation = EstimateEntry::new(
        "occupation_fraction",
        m,
        se,
        Some(theoretical_targets(&plan.params).occ_limit),
        Some(plan.tolerances.occupation_fraction),
    );
    let report = QuenchedReport {
        params: plan.params,
        horizon: t,
        environments,
        walks_per_env,
        winding_count: per_env.iter().map(|s| s.winding_count).sum(),
        per_env,
        occ_dispersion,
        y_dispersion,
        occ_within_se,
        y_within_se,
        pooled_occupation,
    };
    Ok((report, rows))
}
