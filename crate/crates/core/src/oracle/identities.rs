use num_rational::Rational64;
use num_traits::{Signed, Zero};
use rand::Rng;
use rayon::prelude::*;

use super::{
    apply_generator, left_average, phi_by_weights, phi_weights, psi_by_counts, right_average, CorrectorSpec,
    LocalFunction, OracleError, Phi, Psi, Scalar, WindowConfiguration,
};
use crate::seed::{derive_stream, SeedSpec};

/// Largest window (in sites) an identity check accepts.
pub const MAX_ENUMERATION_SITES: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck<S> {
    /// Max over configurations of |generator side - closed form|.
    pub residual: S,
    /// Max discrepancy of the auxiliary rewrites checked alongside: the
    /// occurrence-count form of `psi`, or the gradient decompositions of the
    /// local averages and the weight form of `phi`.
    pub sub_residual: S,
    pub configurations: u64,
}

impl<S: Scalar> IdentityCheck<S> {
    pub fn is_exact_zero(&self) -> bool {
        self.residual.is_zero() && self.sub_residual.is_zero()
    }
}

fn check_window(spec: &CorrectorSpec, window: usize) -> Result<(), OracleError> {
    spec.validate()?;
    let required = spec.required_radius();
    if window < required {
        return Err(OracleError::InsufficientWindow {
            required,
            available: window,
        });
    }
    let sites = 2 * window + 1;
    if sites > MAX_ENUMERATION_SITES {
        return Err(OracleError::EnumerationBudgetExceeded {
            sites,
            budget: MAX_ENUMERATION_SITES,
        });
    }
    Ok(())
}

/// Maximum of `probe` (two residuals) over every configuration of the sites
/// `-radius..=radius`, embedded in an empty window of radius `window`.
///
/// Callers pass the radius the probe actually reads, so the result equals the
/// maximum over all `2^(2 window + 1)` configurations.
pub(crate) fn max_over_configurations<S, F>(
    radius: usize,
    window: usize,
    probe: F,
) -> Result<IdentityCheck<S>, OracleError>
where
    S: Scalar,
    F: Fn(&WindowConfiguration) -> Result<(S, S), OracleError> + Sync,
{
    debug_assert!(radius <= window);
    let count = 1u64 << (2 * radius + 1);
    let offset = window - radius;
    let (residual, sub_residual) = (0..count)
        .into_par_iter()
        .map(|index| {
            let mut values = vec![false; 2 * window + 1];
            for i in 0..2 * radius + 1 {
                values[offset + i] = index >> i & 1 == 1;
            }
            probe(&WindowConfiguration::symmetric(window, values))
        })
        .try_reduce(
            || (S::zero(), S::zero()),
            |a, b| Ok((max(a.0, b.0), max(a.1, b.1))),
        )?;
    Ok(IdentityCheck {
        residual,
        sub_residual,
        configurations: count,
    })
}

fn max<S: PartialOrd>(a: S, b: S) -> S {
    if b > a {
        b
    } else {
        a
    }
}

fn speed<S: Scalar>(xi: &WindowConfiguration, lambda: &S) -> Result<S, OracleError> {
    Ok(S::one() + S::one() - lambda.clone() * xi.value::<S>(0)?)
}

/// `L psi_n = (2 - lambda xi_0)(2 xi_0 - xi_n - xi_{-n})`, checked over every
/// configuration of a window of radius `window`.
pub fn check_psi_identity<S: Scalar>(
    n: usize,
    lambda: &S,
    rho: &S,
    window: usize,
) -> Result<IdentityCheck<S>, OracleError> {
    let spec = CorrectorSpec::psi(n);
    check_window(&spec, window)?;
    let f = Psi { n, rho: rho.clone() };
    let n_i = n as i64;
    max_over_configurations(n, window, |xi| {
        let lhs = apply_generator(&f, xi, lambda)?;
        let two_xi0 = xi.value::<S>(0)? + xi.value::<S>(0)?;
        let rhs = speed(xi, lambda)? * (two_xi0 - xi.value::<S>(n_i)? - xi.value::<S>(-n_i)?);
        let rewrite = f.eval(xi)? - psi_by_counts(n, xi, rho)?;
        Ok(((lhs - rhs).abs(), rewrite.abs()))
    })
}

/// `L phi_{n,l} = -(2 - lambda xi_0)(xi_n - right_avg_n + xi_{-n} - left_avg_{-n})`.
pub fn check_phi_identity<S: Scalar>(
    n: usize,
    ell: usize,
    lambda: &S,
    window: usize,
) -> Result<IdentityCheck<S>, OracleError> {
    let spec = CorrectorSpec::phi(n, ell);
    check_window(&spec, window)?;
    let f = Phi { n, ell };
    let n_i = n as i64;
    max_over_configurations(n + ell, window, |xi| {
        let lhs: S = apply_generator(&f, xi, lambda)?;
        let right = xi.value::<S>(n_i)? - right_average::<S>(xi, n_i, ell)?;
        let left = xi.value::<S>(-n_i)? - left_average::<S>(xi, -n_i, ell)?;
        let rhs = speed(xi, lambda)? * (right.clone() + left.clone());

        let mut right_grad = S::zero();
        let mut left_grad = S::zero();
        for j in 0..ell as i64 {
            let w = S::ratio(ell as i64 - j, ell as i64);
            right_grad = right_grad + w.clone() * (xi.value::<S>(n_i + j)? - xi.value::<S>(n_i + j + 1)?);
            left_grad = left_grad + w * (xi.value::<S>(-n_i - j)? - xi.value::<S>(-n_i - j - 1)?);
        }
        let weights = LocalFunction::<S>::eval(&f, xi)? - phi_by_weights::<S>(n, ell, xi)?;
        let sub = max(
            max((right - right_grad).abs(), (left - left_grad).abs()),
            weights.abs(),
        );
        Ok(((lhs + rhs).abs(), sub))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IncrementBounds {
    pub samples: usize,
    /// `[phi(xi^{x,x+1}) - phi(xi)]^2 <= l` for every bond in the window.
    pub swap_within_ell: bool,
    /// Per-bond form: the squared increment is at most `(a_k - a_{k+1})^2`
    /// on the bonds `(n+k, n+k+1)` and `(-n-k-1, -n-k)`, and zero elsewhere.
    pub swap_per_bond: bool,
    /// `[phi(theta_1 xi) - phi(xi)]^2 <= (2 a_0)^2`.
    pub shift_within_2a0: bool,
    /// `psi(xi) - psi(theta_1 xi) = sum_{k=1}^{n} xi_k - sum_{k=-n+1}^{0} xi_k`.
    pub psi_shift_exact: bool,
    /// `|phi| <= sum_j ((l - j)/l)(2n + 2j + 1)`.
    pub phi_magnitude: bool,
}

impl IncrementBounds {
    pub fn all_hold(&self) -> bool {
        self.swap_within_ell && self.swap_per_bond && self.shift_within_2a0 && self.psi_shift_exact && self.phi_magnitude
    }
}

/// Squared-increment bound for the exchange across bond `(x, x+1)`.
pub(crate) fn swap_increment_cap(n: usize, a: &[Rational64], x: i64) -> Rational64 {
    let n = n as i64;
    let ell = a.len() as i64 - 1;
    for k in 0..ell {
        if x == n + k || x == -n - k - 1 {
            let d = a[k as usize] - a[k as usize + 1];
            return d * d;
        }
    }
    Rational64::zero()
}

fn check_one(n: usize, ell: usize, xi: &WindowConfiguration, bounds: &mut IncrementBounds) -> Result<(), OracleError> {
    let phi = Phi { n, ell };
    let psi = Psi {
        n,
        rho: Rational64::new(1, 2),
    };
    let a = phi_weights::<Rational64>(ell);
    let ell_r = Rational64::from_integer(ell as i64);
    let w = xi.radius() as i64;
    let base: Rational64 = phi.eval(xi)?;

    for x in -w..w {
        let d = LocalFunction::<Rational64>::eval(&phi, &xi.swapped(x))? - base;
        let sq = d * d;
        bounds.swap_within_ell &= sq <= ell_r;
        bounds.swap_per_bond &= sq <= swap_increment_cap(n, &a, x);
    }

    let shift = LocalFunction::<Rational64>::eval(&phi, &xi.shifted(1))? - base;
    let two_a0 = a[0] + a[0];
    bounds.shift_within_2a0 &= shift * shift <= two_a0 * two_a0;

    let n_i = n as i64;
    let lhs = psi.eval(xi)? - psi.eval(&xi.shifted(1))?;
    let mut rhs = Rational64::zero();
    for k in 1..=n_i {
        rhs += xi.value::<Rational64>(k)?;
    }
    for k in -n_i + 1..=0 {
        rhs -= xi.value::<Rational64>(k)?;
    }
    bounds.psi_shift_exact &= lhs == rhs;

    let mut cap = Rational64::zero();
    for j in 0..ell as i64 {
        cap += Rational64::new(ell as i64 - j, ell as i64) * Rational64::from_integer(2 * n_i + 2 * j + 1);
    }
    bounds.phi_magnitude &= base.abs() <= cap;
    Ok(())
}

/// Checks the increment bounds on `samples` uniformly random configurations
/// of a radius-`window` window, plus the all-empty and all-full ones.
pub fn check_increment_bounds(
    n: usize,
    ell: usize,
    window: usize,
    samples: usize,
    seed: u64,
) -> Result<IncrementBounds, OracleError> {
    let spec = CorrectorSpec::phi(n, ell);
    spec.validate()?;
    if window < spec.required_radius() {
        return Err(OracleError::InsufficientWindow {
            required: spec.required_radius(),
            available: window,
        });
    }
    let mut bounds = IncrementBounds {
        samples: samples + 2,
        swap_within_ell: true,
        swap_per_bond: true,
        shift_within_2a0: true,
        psi_shift_exact: true,
        phi_magnitude: true,
    };
    check_one(n, ell, &WindowConfiguration::constant(window, false), &mut bounds)?;
    check_one(n, ell, &WindowConfiguration::constant(window, true), &mut bounds)?;
    let mut rng = derive_stream(&SeedSpec::new(seed, 0));
    for _ in 0..samples {
        let values = (0..2 * window + 1).map(|_| rng.random::<bool>()).collect();
        check_one(n, ell, &WindowConfiguration::symmetric(window, values), &mut bounds)?;
    }
    Ok(bounds)
}
