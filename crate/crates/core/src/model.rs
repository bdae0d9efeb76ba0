//! Model parameters, lattice geometry and the closed-form long-time limits.
//!
//! The walk jumps to each neighbour at rate `1 - lambda * occ`, where `occ` is
//! the occupancy of the site it currently sits on. The environment is a
//! rate-1 stirring exclusion process started from Bernoulli(`rho`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{field} out of range: {value} ({expected})")]
    OutOfRange {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },
}

/// Density of the environment and slowdown of the walk on particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub rho: f64,
    pub lambda: f64,
}

impl ModelParams {
    pub fn new(rho: f64, lambda: f64) -> Result<Self, ModelError> {
        let params = Self { rho, lambda };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        unit_interval("rho", self.rho)?;
        unit_interval("lambda", self.lambda)
    }

    /// Per-neighbour jump rate of the walk from a site with the given occupancy.
    #[inline]
    pub fn jump_rate(&self, occupied: bool) -> f64 {
        if occupied {
            1.0 - self.lambda
        } else {
            1.0
        }
    }
}

fn unit_interval(field: &'static str, value: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ModelError::OutOfRange {
            field,
            value,
            expected: "must lie in [0, 1]",
        })
    }
}

/// Periodic lattice `0..sites`; bond `b` joins sites `b` and `b + 1 mod sites`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub sites: u32,
}

impl LatticeSpec {
    pub const MIN_DEFAULT_SITES: u32 = 1024;

    pub fn new(sites: u32) -> Result<Self, ModelError> {
        let spec = Self { sites };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.sites < 4 || !self.sites.is_multiple_of(2) {
            return Err(ModelError::OutOfRange {
                field: "L",
                value: f64::from(self.sites),
                expected: "must be even and at least 4",
            });
        }
        Ok(())
    }

    /// Default torus for a run of length `horizon`: `max(1024, 24 sqrt(T))`,
    /// rounded up to the next even integer. Winding then needs a walk
    /// excursion of about 8.5 free-walk standard deviations.
    pub fn for_horizon(horizon: f64) -> Self {
        let wanted = (24.0 * horizon.max(0.0).sqrt()).ceil() as u32;
        let wanted = wanted + wanted % 2;
        Self {
            sites: wanted.max(Self::MIN_DEFAULT_SITES),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.sites as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.sites == 0
    }

    /// Site index of the lifted position `x`.
    #[inline]
    pub fn wrap(&self, x: i64) -> u32 {
        x.rem_euclid(i64::from(self.sites)) as u32
    }
}

pub fn validate(params: &ModelParams, lattice: &LatticeSpec) -> Result<(), ModelError> {
    params.validate()?;
    lattice.validate()
}

/// Long-time limits of the occupation fraction and of `Var(X_t) / t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalTargets {
    pub sigma_sq: f64,
    pub occ_limit: f64,
}

pub fn theoretical_targets(params: &ModelParams) -> TheoreticalTargets {
    let ModelParams { rho, lambda } = *params;
    let denom = 2.0 - lambda * (1.0 - rho);
    TheoreticalTargets {
        occ_limit: 2.0 * rho / denom,
        sigma_sq: 2.0 - 4.0 * lambda * rho / denom,
    }
}
