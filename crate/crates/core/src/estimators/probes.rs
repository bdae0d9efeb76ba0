use rayon::prelude::*;
use serde::Serialize;

use super::{keep_wound, ExperimentPlan};
use crate::model::{LatticeSpec, ModelParams};
use crate::seed::{derive_stream, SeedSpec};
use crate::ssep::{init_stationary, StirringDynamics};
use crate::stats::{self, ConfidenceLevel, SampleSummary};
use crate::walk::{simulate_joint, WalkRun};
use crate::SimError;

/// `(6/5)^6`, Doob's maximal constant for sixth moments.
pub const DOOB_L6_CONSTANT: f64 = 2.985_984;

fn check_grid(grid: &[f64]) -> Result<(), SimError> {
    if grid.len() < 3 {
        return Err(SimError::InvalidPlan(format!("t-grid needs at least 3 points, got {}", grid.len())));
    }
    if grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::InvalidPlan("t-grid must be positive and increasing".into()));
    }
    Ok(())
}

/// Runs `replicas` annealed walks to `horizon`; grid point `g` offsets the
/// stream ids by `g * replicas`.
fn grid_runs(
    params: &ModelParams,
    lattice: LatticeSpec,
    horizon: f64,
    replicas: usize,
    master_seed: u64,
    g: usize,
) -> Result<Vec<WalkRun>, SimError> {
    let offset = (g * replicas) as u64;
    (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            keep_wound(
                simulate_joint(
                    params,
                    lattice,
                    horizon,
                    SeedSpec::environment(master_seed, offset + i),
                    SeedSpec::walk(master_seed, offset + i),
                    false,
                )
                .map(|joint| joint.run),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub t: f64,
    pub trials: usize,
    pub exceedances: usize,
    pub probability: f64,
    pub wilson95: [f64; 2],
    pub winding_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateProbeReport {
    pub epsilon: f64,
    pub rows: Vec<RateRow>,
    /// No later probability is significantly above an earlier one: each
    /// interval's lower end stays below the previous interval's upper end.
    pub non_increasing: bool,
}

/// Empirical `P(|Y_t| / t >= epsilon)` along `plan.t_grid`, with `plan.replicas`
/// runs per point on `plan.lattice`.
pub fn rate_probe(plan: &ExperimentPlan, epsilon: f64) -> Result<RateProbeReport, SimError> {
    check_grid(&plan.t_grid)?;
    crate::model::validate(&plan.params, &plan.lattice)?;
    if plan.replicas < 2 {
        return Err(SimError::InvalidPlan("at least 2 replicas are needed".into()));
    }
    let mut rows = Vec::with_capacity(plan.t_grid.len());
    for (g, &t) in plan.t_grid.iter().enumerate() {
        let runs = grid_runs(&plan.params, plan.lattice, t, plan.replicas, plan.master_seed, g)?;
        let used: Vec<&WalkRun> = runs.iter().filter(|r| !r.realization.winding).collect();
        let exceedances = used
            .iter()
            .filter(|r| (r.functionals.y_integral / t).abs() >= epsilon)
            .count();
        let (lo, hi) = stats::wilson_interval(exceedances, used.len(), ConfidenceLevel::P95);
        rows.push(RateRow {
            t,
            trials: used.len(),
            exceedances,
            probability: exceedances as f64 / used.len().max(1) as f64,
            wilson95: [lo, hi],
            winding_count: runs.len() - used.len(),
        });
    }
    let non_increasing = rows.windows(2).all(|w| w[1].wilson95[0] <= w[0].wilson95[1]);
    Ok(RateProbeReport {
        epsilon,
        rows,
        non_increasing,
    })
}

/// `E[S_J^6]` for a simple symmetric walk after `J ~ Poisson(mu)` steps:
/// `15 mu^3 + 15 mu^2 + mu`.
pub fn poisson_walk_sixth_moment(mu: f64) -> f64 {
    15.0 * mu.powi(3) + 15.0 * mu.powi(2) + mu
}

/// `E[J + 15 J^2 + 90 J^3]` for `J ~ Poisson(mu)`: `90 mu^3 + 285 mu^2 + 106 mu`.
pub fn poisson_jump_bound_moment(mu: f64) -> f64 {
    90.0 * mu.powi(3) + 285.0 * mu.powi(2) + 106.0 * mu
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SixthMomentRow {
    pub t: f64,
    pub used: usize,
    pub winding_count: usize,
    /// Mean of `X_t^6 / t^3`.
    pub ratio: f64,
    pub ratio_se: f64,
    /// Mean of `(J + 15 J^2 + 90 J^3) / t^3` over the same runs.
    pub jump_bound_ratio: f64,
    /// The same bound under `J ~ Poisson(2t)`, divided by `t^3`.
    pub poisson_bound_ratio: f64,
    /// Mean of `max_{s<=t} |X_s|^6 / t^3`.
    pub max_ratio: f64,
    /// `DOOB_L6_CONSTANT * ratio`.
    pub doob_cap: f64,
    pub dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SixthMomentReport {
    pub rows: Vec<SixthMomentRow>,
    /// No ratio exceeds an earlier one by more than the 99% margin of their difference.
    pub bounded: bool,
    pub dominated: bool,
}

pub fn sixth_moment_probe(
    params: &ModelParams,
    lattice: LatticeSpec,
    t_grid: &[f64],
    replicas: usize,
    master_seed: u64,
) -> Result<SixthMomentReport, SimError> {
    check_grid(t_grid)?;
    crate::model::validate(params, &lattice)?;
    let mut rows = Vec::with_capacity(t_grid.len());
    for (g, &t) in t_grid.iter().enumerate() {
        let runs = grid_runs(params, lattice, t, replicas, master_seed, g)?;
        let used: Vec<&WalkRun> = runs.iter().filter(|r| !r.realization.winding).collect();
        let t3 = t.powi(3);
        let sixth: Vec<f64> = used.iter().map(|r| (r.realization.position as f64).powi(6) / t3).collect();
        let bound: Vec<f64> = used
            .iter()
            .map(|r| {
                let j = r.realization.jump_count as f64;
                (j + 15.0 * j * j + 90.0 * j.powi(3)) / t3
            })
            .collect();
        let maxima: Vec<f64> = used
            .iter()
            .map(|r| (r.realization.max_abs_position as f64).powi(6) / t3)
            .collect();
        let s = SampleSummary::from_slice(&sixth)?;
        let jump_bound_ratio = SampleSummary::from_slice(&bound)?.mean;
        rows.push(SixthMomentRow {
            t,
            used: used.len(),
            winding_count: runs.len() - used.len(),
            ratio: s.mean,
            ratio_se: s.std_error(),
            jump_bound_ratio,
            poisson_bound_ratio: poisson_jump_bound_moment(2.0 * t) / t3,
            max_ratio: SampleSummary::from_slice(&maxima)?.mean,
            doob_cap: DOOB_L6_CONSTANT * s.mean,
            dominated: s.mean <= jump_bound_ratio,
        });
    }
    let z = ConfidenceLevel::P99.z();
    let bounded = rows.iter().enumerate().all(|(k, a)| {
        rows[k + 1..]
            .iter()
            .all(|b| b.ratio - a.ratio <= z * (a.ratio_se.powi(2) + b.ratio_se.powi(2)).sqrt())
    });
    let dominated = rows.iter().all(|r| r.dominated);
    Ok(SixthMomentReport {
        rows,
        bounded,
        dominated,
    })
}

/// Functional of one space-time box, with values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxFunctional {
    /// 1 when the time-averaged density of the box exceeds `rho`.
    DensityAboveRho,
    Constant(f64),
}

impl BoxFunctional {
    fn apply(&self, density: f64, rho: f64) -> f64 {
        match *self {
            Self::DensityAboveRho => f64::from(u8::from(density > rho)),
            Self::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecouplingPlan {
    pub rho: f64,
    pub lattice: LatticeSpec,
    /// Box size: `H + 1` sites by `H` time units.
    pub h: u32,
    /// Left ends `y` of the second box `[y, y + H]`.
    pub separations: Vec<i64>,
    pub replicas: usize,
    pub master_seed: u64,
    pub first: BoxFunctional,
    pub second: BoxFunctional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecouplingRow {
    pub y: i64,
    pub covariance: f64,
    pub se: f64,
    pub ci99: [f64; 2],
    pub first_mean: f64,
    pub second_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecouplingReport {
    pub h: u32,
    pub replicas: usize,
    pub rows: Vec<DecouplingRow>,
}

/// Integrated particle count of one box `[left, left + H]` on the torus.
struct BoxCounter {
    left_site: u32,
    right_site: u32,
    left_bond: u32,
    right_bond: u32,
    count: i64,
    integral: f64,
    since: f64,
}

impl BoxCounter {
    fn new(lattice: LatticeSpec, left: i64, h: u32, config: &crate::LatticeConfiguration) -> Self {
        let count = (0..=i64::from(h))
            .filter(|k| config.get(lattice.wrap(left + k)))
            .count() as i64;
        Self {
            left_site: lattice.wrap(left),
            right_site: lattice.wrap(left + i64::from(h)),
            left_bond: lattice.wrap(left - 1),
            right_bond: lattice.wrap(left + i64::from(h)),
            count,
            integral: 0.0,
            since: 0.0,
        }
    }

    /// Called after an effective swap across `bond`.
    #[inline]
    fn swapped(&mut self, bond: u32, time: f64, config: &crate::LatticeConfiguration) {
        let delta = if bond == self.left_bond {
            if config.get(self.left_site) {
                1
            } else {
                -1
            }
        } else if bond == self.right_bond {
            if config.get(self.right_site) {
                1
            } else {
                -1
            }
        } else {
            return;
        };
        self.integral += self.count as f64 * (time - self.since);
        self.since = time;
        self.count += delta;
    }

    fn density(&mut self, h: u32) -> f64 {
        let horizon = f64::from(h);
        self.integral += self.count as f64 * (horizon - self.since);
        self.since = horizon;
        self.integral / (f64::from(h + 1) * horizon)
    }
}

/// Unbiased covariance by the pairwise form `sum_{i<j} (a_i - a_j)(b_i - b_j) / (n (n - 1))`,
/// which is exactly zero when either sample is constant.
fn pairwise_covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += (a[i] - a[j]) * (b[i] - b[j]);
        }
    }
    total / (n * (n - 1)) as f64
}

/// Covariance of box functionals of the stationary exclusion process: the
/// first box is `[-H, 0] x [0, H]`, the second `[y, y + H] x [0, H]`.
pub fn decoupling_probe(plan: &DecouplingPlan) -> Result<DecouplingReport, SimError> {
    plan.lattice.validate()?;
    if !(0.0..=1.0).contains(&plan.rho) {
        return Err(SimError::InvalidPlan(format!("rho {} outside [0, 1]", plan.rho)));
    }
    if plan.h == 0 || plan.replicas < 2 {
        return Err(SimError::InvalidPlan("decoupling needs H >= 1 and at least 2 replicas".into()));
    }
    let span = plan.separations.iter().map(|y| y.abs()).max().unwrap_or(0) + 2 * i64::from(plan.h) + 2;
    if span >= i64::from(plan.lattice.sites) {
        return Err(SimError::InvalidPlan(format!(
            "lattice of {} sites is too small for boxes spanning {span}",
            plan.lattice.sites
        )));
    }
    let h = plan.h;
    let samples: Vec<Vec<f64>> = (0..plan.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let seed = SeedSpec::environment(plan.master_seed, r);
            let mut rng = derive_stream(&seed);
            let initial = init_stationary(plan.rho, plan.lattice, &mut rng);
            let mut boxes: Vec<BoxCounter> = std::iter::once(-i64::from(h))
                .chain(plan.separations.iter().copied())
                .map(|left| BoxCounter::new(plan.lattice, left, h, &initial))
                .collect();
            let mut dynamics = StirringDynamics::new(initial, rng);
            let horizon = f64::from(h);
            while dynamics.next_ring_time() <= horizon {
                let ring = dynamics.fire();
                if ring.effective {
                    for b in boxes.iter_mut() {
                        b.swapped(ring.bond, ring.time, dynamics.config());
                    }
                }
            }
            boxes
                .iter_mut()
                .enumerate()
                .map(|(k, b)| {
                    let functional = if k == 0 { plan.first } else { plan.second };
                    functional.apply(b.density(h), plan.rho)
                })
                .collect()
        })
        .collect();

    let first: Vec<f64> = samples.iter().map(|s| s[0]).collect();
    let first_mean = SampleSummary::from_slice(&first)?.mean;
    let z = ConfidenceLevel::P99.z();
    let rows = plan
        .separations
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let second: Vec<f64> = samples.iter().map(|s| s[k + 1]).collect();
            let second_mean = SampleSummary::from_slice(&second)?.mean;
            let covariance = pairwise_covariance(&first, &second);
            let products: Vec<f64> = first
                .iter()
                .zip(&second)
                .map(|(a, b)| (a - first_mean) * (b - second_mean))
                .collect();
            let se = SampleSummary::from_slice(&products)?.std_error();
            Ok(DecouplingRow {
                y,
                covariance,
                se,
                ci99: [covariance - z * se, covariance + z * se],
                first_mean,
                second_mean,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(DecouplingReport {
        h,
        replicas: plan.replicas,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_covariance_matches_textbook_form() {
        let a = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let b = [0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0];
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let textbook = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
        assert!((pairwise_covariance(&a, &b) - textbook).abs() < 1e-15);
        assert_eq!(pairwise_covariance(&[0.3; 5], &b[..5]), 0.0);
    }

    #[test]
    fn doob_constant() {
        assert!((DOOB_L6_CONSTANT - 1.2f64.powi(6)).abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(check_grid(&[1.0, 2.0]).is_err());
        assert!(check_grid(&[1.0, 3.0, 2.0]).is_err());
        assert!(check_grid(&[1.0, 2.0, 3.0]).is_ok());
    }
}
