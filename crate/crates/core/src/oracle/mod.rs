//! Exact evaluation of the generator of the environment seen from the walker
//! on local functions over a finite window, and the two correctors used to
//! turn time integrals into martingales plus boundary terms.
//!
//! For a local function `f` with support radius `r`,
//!
//! ```text
//! Lf(xi) = sum_{y=-r-1}^{r} [f(xi^{y,y+1}) - f(xi)]
//!        + (1 - lambda xi_0) [f(theta_1 xi) + f(theta_{-1} xi) - 2 f(xi)]
//! ```
//!
//! Exchange terms on bonds that miss the support vanish identically and are
//! skipped. Windows have an explicit extent; reading outside it is an error,
//! never an implicit zero.

mod identities;
mod verify;

pub use identities::{
    check_increment_bounds, check_phi_identity, check_psi_identity, IdentityCheck, IncrementBounds,
    MAX_ENUMERATION_SITES,
};
pub use verify::{run_verification, VerifyOptions, VerifyRow, VerifyStatus, FLOAT_TOLERANCE, LAMBDA_GRID, RHO_GRID};

use std::fmt::{Debug, Display};

use num_rational::Rational64;
use num_traits::{Num, Signed};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("window radius {available} is smaller than the required {required}")]
    InsufficientWindow { required: usize, available: usize },
    #[error("enumeration over {sites} sites exceeds the budget of {budget}")]
    EnumerationBudgetExceeded { sites: usize, budget: usize },
    #[error("invalid corrector parameters: {0}")]
    InvalidSpec(&'static str),
}

/// Number type for generator evaluation: exact rationals or `f64`.
pub trait Scalar: Num + Signed + Clone + PartialOrd + Debug + Display + Send + Sync {
    fn ratio(numer: i64, denom: i64) -> Self;

    fn from_bit(bit: bool) -> Self {
        if bit {
            Self::one()
        } else {
            Self::zero()
        }
    }
}

impl Scalar for f64 {
    fn ratio(numer: i64, denom: i64) -> Self {
        numer as f64 / denom as f64
    }
}

impl Scalar for Rational64 {
    fn ratio(numer: i64, denom: i64) -> Self {
        Rational64::new(numer, denom)
    }
}

/// Values `xi_x` for `x` in `lo..lo + len`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WindowConfiguration {
    lo: i64,
    values: Vec<bool>,
}

impl WindowConfiguration {
    pub fn new(lo: i64, values: Vec<bool>) -> Self {
        Self { lo, values }
    }

    /// Symmetric window `-radius..=radius`.
    pub fn symmetric(radius: usize, values: Vec<bool>) -> Self {
        assert_eq!(values.len(), 2 * radius + 1, "symmetric window length");
        Self::new(-(radius as i64), values)
    }

    pub fn constant(radius: usize, value: bool) -> Self {
        Self::symmetric(radius, vec![value; 2 * radius + 1])
    }

    /// The `index`-th of the `2^(2 radius + 1)` configurations; bit `i` of
    /// `index` is `xi_{i - radius}`.
    pub fn from_index(radius: usize, index: u64) -> Self {
        Self::symmetric(radius, (0..2 * radius + 1).map(|i| index >> i & 1 == 1).collect())
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    /// Largest `W` with `-W..=W` inside the window.
    pub fn radius(&self) -> usize {
        (-self.lo).min(self.hi()).max(0) as usize
    }

    pub fn covers(&self, radius: usize) -> bool {
        let r = radius as i64;
        self.lo <= -r && self.hi() >= r
    }

    #[inline]
    pub fn get(&self, x: i64) -> Result<bool, OracleError> {
        let index = x - self.lo;
        if index < 0 || index >= self.values.len() as i64 {
            return Err(OracleError::InsufficientWindow {
                required: x.unsigned_abs() as usize,
                available: self.radius(),
            });
        }
        Ok(self.values[index as usize])
    }

    pub fn value<S: Scalar>(&self, x: i64) -> Result<S, OracleError> {
        self.get(x).map(S::from_bit)
    }

    pub fn set(&mut self, x: i64, value: bool) {
        let index = (x - self.lo) as usize;
        self.values[index] = value;
    }

    /// `xi^{y,y+1}`, exchanging in place.
    pub fn swap(&mut self, y: i64) {
        let i = (y - self.lo) as usize;
        self.values.swap(i, i + 1);
    }

    pub fn swapped(&self, y: i64) -> Self {
        let mut out = self.clone();
        out.swap(y);
        out
    }

    /// `theta_k xi`, i.e. `(theta_k xi)_x = xi_{x + k}`.
    pub fn shifted(&self, k: i64) -> Self {
        Self {
            lo: self.lo - k,
            values: self.values.clone(),
        }
    }
}

/// A function of finitely many occupancies `xi_{-r..=r}`.
pub trait LocalFunction<S: Scalar> {
    fn support_radius(&self) -> usize;
    fn eval(&self, xi: &WindowConfiguration) -> Result<S, OracleError>;
}

/// `f(xi) = xi_x`.
#[derive(Debug, Clone, Copy)]
pub struct SiteValue(pub i64);

impl<S: Scalar> LocalFunction<S> for SiteValue {
    fn support_radius(&self) -> usize {
        self.0.unsigned_abs() as usize
    }

    fn eval(&self, xi: &WindowConfiguration) -> Result<S, OracleError> {
        xi.value(self.0)
    }
}

#[derive(Debug, Clone)]
pub struct Constant<S>(pub S);

impl<S: Scalar> LocalFunction<S> for Constant<S> {
    fn support_radius(&self) -> usize {
        0
    }

    fn eval(&self, _xi: &WindowConfiguration) -> Result<S, OracleError> {
        Ok(self.0.clone())
    }
}

/// A user-supplied rule with a declared support radius.
pub struct FnLocal<F> {
    pub radius: usize,
    pub rule: F,
}

impl<S, F> LocalFunction<S> for FnLocal<F>
where
    S: Scalar,
    F: Fn(&WindowConfiguration) -> Result<S, OracleError>,
{
    fn support_radius(&self) -> usize {
        self.radius
    }

    fn eval(&self, xi: &WindowConfiguration) -> Result<S, OracleError> {
        (self.rule)(xi)
    }
}

pub fn apply_generator<S: Scalar, F: LocalFunction<S> + ?Sized>(
    f: &F,
    xi: &WindowConfiguration,
    lambda: &S,
) -> Result<S, OracleError> {
    let r = f.support_radius();
    if !xi.covers(r + 1) {
        return Err(OracleError::InsufficientWindow {
            required: r + 1,
            available: xi.radius(),
        });
    }
    let r = r as i64;
    let base = f.eval(xi)?;
    let mut work = xi.clone();
    let mut exchange = S::zero();
    for y in -r - 1..=r {
        work.swap(y);
        exchange = exchange + (f.eval(&work)? - base.clone());
        work.swap(y);
    }
    let rate = S::one() - lambda.clone() * xi.value::<S>(0)?;
    let right = f.eval(&xi.shifted(1))?;
    let left = f.eval(&xi.shifted(-1))?;
    let two = S::one() + S::one();
    Ok(exchange + rate * (right + left - two * base))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectorKind {
    Psi,
    Phi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrectorSpec {
    pub n: usize,
    pub ell: usize,
    pub kind: CorrectorKind,
}

impl CorrectorSpec {
    pub fn psi(n: usize) -> Self {
        Self {
            n,
            ell: 1,
            kind: CorrectorKind::Psi,
        }
    }

    pub fn phi(n: usize, ell: usize) -> Self {
        Self {
            n,
            ell,
            kind: CorrectorKind::Phi,
        }
    }

    /// Window radius the corrector operations insist on: one site beyond the
    /// generator's reach for `psi`, plus the averaging length for `phi`.
    pub fn required_radius(&self) -> usize {
        match self.kind {
            CorrectorKind::Psi => self.n + 1,
            CorrectorKind::Phi => self.n + self.ell + 1,
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.n == 0 {
            return Err(OracleError::InvalidSpec("n must be positive"));
        }
        if self.kind == CorrectorKind::Phi && self.ell == 0 {
            return Err(OracleError::InvalidSpec("ell must be positive"));
        }
        Ok(())
    }

    fn check_window(&self, xi: &WindowConfiguration) -> Result<(), OracleError> {
        self.validate()?;
        let required = self.required_radius();
        if xi.covers(required) {
            Ok(())
        } else {
            Err(OracleError::InsufficientWindow {
                required,
                available: xi.radius(),
            })
        }
    }
}

/// `psi_n(xi) = -sum_{k=1}^{n} sum_{x=-k+1}^{k-1} (xi_x - rho)`; support radius `n - 1`.
#[derive(Debug, Clone)]
pub struct Psi<S> {
    pub n: usize,
    pub rho: S,
}

impl<S: Scalar> LocalFunction<S> for Psi<S> {
    fn support_radius(&self) -> usize {
        self.n - 1
    }

    fn eval(&self, xi: &WindowConfiguration) -> Result<S, OracleError> {
        let mut occupied = 0i64;
        let mut count = 0i64;
        for k in 1..=self.n as i64 {
            for x in -k + 1..k {
                occupied += xi.get(x)? as i64;
                count += 1;
            }
        }
        Ok(S::ratio(count, 1) * self.rho.clone() - S::ratio(occupied, 1))
    }
}

/// `phi_{n,l}(xi) = sum_{j=0}^{l-1} ((l - j) / l) sum_{x=-n-j}^{n+j} xi_x`;
/// support radius `n + l - 1`.
#[derive(Debug, Clone, Copy)]
pub struct Phi {
    pub n: usize,
    pub ell: usize,
}

impl<S: Scalar> LocalFunction<S> for Phi {
    fn support_radius(&self) -> usize {
        self.n + self.ell - 1
    }

    fn eval(&self, xi: &WindowConfiguration) -> Result<S, OracleError> {
        let (n, ell) = (self.n as i64, self.ell as i64);
        let mut weighted = 0i64;
        for j in 0..ell {
            let mut block = 0i64;
            for x in -n - j..=n + j {
                block += xi.get(x)? as i64;
            }
            weighted += (ell - j) * block;
        }
        Ok(S::ratio(weighted, ell))
    }
}

pub fn psi<S: Scalar>(spec: &CorrectorSpec, xi: &WindowConfiguration, rho: &S) -> Result<S, OracleError> {
    if spec.kind != CorrectorKind::Psi {
        return Err(OracleError::InvalidSpec("expected a psi corrector"));
    }
    spec.check_window(xi)?;
    Psi {
        n: spec.n,
        rho: rho.clone(),
    }
    .eval(xi)
}

/// `psi_n` written by occurrence counts:
/// `-[n (xi_0 - rho) + sum_{m=1}^{n-1} (n - m)(xi_m + xi_{-m} - 2 rho)]`.
pub fn psi_by_counts<S: Scalar>(n: usize, xi: &WindowConfiguration, rho: &S) -> Result<S, OracleError> {
    let n_i = n as i64;
    let two_rho = rho.clone() + rho.clone();
    let mut total = S::ratio(n_i, 1) * (xi.value::<S>(0)? - rho.clone());
    for m in 1..n_i {
        let pair = xi.value::<S>(m)? + xi.value::<S>(-m)? - two_rho.clone();
        total = total + S::ratio(n_i - m, 1) * pair;
    }
    Ok(-total)
}

pub fn phi<S: Scalar>(spec: &CorrectorSpec, xi: &WindowConfiguration) -> Result<S, OracleError> {
    if spec.kind != CorrectorKind::Phi {
        return Err(OracleError::InvalidSpec("expected a phi corrector"));
    }
    spec.check_window(xi)?;
    Phi {
        n: spec.n,
        ell: spec.ell,
    }
    .eval(xi)
}

/// `a_k = sum_{j=k}^{l-1} (l - j) / l`, for `k` in `0..=l` (`a_l = 0`).
pub fn phi_weights<S: Scalar>(ell: usize) -> Vec<S> {
    let ell = ell as i64;
    (0..=ell)
        .map(|k| (k..ell).fold(S::zero(), |acc, j| acc + S::ratio(ell - j, ell)))
        .collect()
}

/// `phi_{n,l}` through the weights: `a_0 sum_{|j|<=n} xi_j + sum_{k=1}^{l-1} a_k (xi_{n+k} + xi_{-n-k})`.
pub fn phi_by_weights<S: Scalar>(n: usize, ell: usize, xi: &WindowConfiguration) -> Result<S, OracleError> {
    let a = phi_weights::<S>(ell);
    let n_i = n as i64;
    let mut centre = S::zero();
    for j in -n_i..=n_i {
        centre = centre + xi.value::<S>(j)?;
    }
    let mut total = a[0].clone() * centre;
    for k in 1..ell as i64 {
        let pair = xi.value::<S>(n_i + k)? + xi.value::<S>(-n_i - k)?;
        total = total + a[k as usize].clone() * pair;
    }
    Ok(total)
}

/// Right average `(xi_{x+1} + ... + xi_{x+l}) / l`.
pub fn right_average<S: Scalar>(xi: &WindowConfiguration, x: i64, ell: usize) -> Result<S, OracleError> {
    let mut sum = S::zero();
    for k in 1..=ell as i64 {
        sum = sum + xi.value::<S>(x + k)?;
    }
    Ok(sum * S::ratio(1, ell as i64))
}

/// Left average `(xi_{x-1} + ... + xi_{x-l}) / l`.
pub fn left_average<S: Scalar>(xi: &WindowConfiguration, x: i64, ell: usize) -> Result<S, OracleError> {
    let mut sum = S::zero();
    for k in 1..=ell as i64 {
        sum = sum + xi.value::<S>(x - k)?;
    }
    Ok(sum * S::ratio(1, ell as i64))
}

#[cfg(test)]
mod tests;
