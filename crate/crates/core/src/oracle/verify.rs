use num_rational::Rational64;
use num_traits::ToPrimitive;
use serde::Serialize;

use super::{check_phi_identity, check_psi_identity, IdentityCheck, OracleError};

pub const LAMBDA_GRID: [(i64, i64); 4] = [(0, 1), (1, 4), (1, 2), (1, 1)];
pub const RHO_GRID: [(i64, i64); 5] = [(0, 1), (1, 4), (1, 2), (3, 4), (1, 1)];

/// Residual tolerance of the floating-point path.
pub const FLOAT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub n_max: usize,
    pub ell_max: usize,
    /// Window radius `W`; configurations span `2W + 1` sites.
    pub window: usize,
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerifyStatus {
    Pass,
    Fail,
    InsufficientWindow,
    EnumerationBudgetExceeded,
}

impl VerifyStatus {
    pub fn label(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::InsufficientWindow => "INSUFFICIENT_WINDOW",
            Self::EnumerationBudgetExceeded => "ENUMERATION_BUDGET_EXCEEDED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRow {
    pub identity: &'static str,
    pub n: usize,
    pub ell: Option<usize>,
    pub lambda: String,
    pub rho: Option<String>,
    /// Exact value in the rational path, decimal otherwise. Empty when the
    /// case could not run.
    pub residual: String,
    pub sub_residual: String,
    pub configurations: u64,
    pub status: VerifyStatus,
}

impl VerifyRow {
    pub fn line(&self) -> String {
        let ell = self.ell.map_or_else(|| "-".to_string(), |l| l.to_string());
        let rho = self.rho.clone().unwrap_or_else(|| "-".to_string());
        let residual = if self.residual.is_empty() { "-" } else { &self.residual };
        format!(
            "{:<4} n={} ell={} lambda={} rho={} residual={} {}",
            self.identity,
            self.n,
            ell,
            self.lambda,
            rho,
            residual,
            self.status.label()
        )
    }
}

fn rational(p: (i64, i64)) -> Rational64 {
    Rational64::new(p.0, p.1)
}

fn status_of_error(err: &OracleError) -> Result<VerifyStatus, OracleError> {
    match err {
        OracleError::InsufficientWindow { .. } => Ok(VerifyStatus::InsufficientWindow),
        OracleError::EnumerationBudgetExceeded { .. } => Ok(VerifyStatus::EnumerationBudgetExceeded),
        OracleError::InvalidSpec(_) => Err(err.clone()),
    }
}

struct Outcome {
    residual: String,
    sub_residual: String,
    configurations: u64,
    status: VerifyStatus,
}

fn exact_outcome(result: Result<IdentityCheck<Rational64>, OracleError>) -> Result<Outcome, OracleError> {
    Ok(match result {
        Ok(check) => Outcome {
            status: if check.is_exact_zero() {
                VerifyStatus::Pass
            } else {
                VerifyStatus::Fail
            },
            residual: check.residual.to_string(),
            sub_residual: check.sub_residual.to_string(),
            configurations: check.configurations,
        },
        Err(err) => Outcome {
            residual: String::new(),
            sub_residual: String::new(),
            configurations: 0,
            status: status_of_error(&err)?,
        },
    })
}

fn float_outcome(result: Result<IdentityCheck<f64>, OracleError>) -> Result<Outcome, OracleError> {
    Ok(match result {
        Ok(check) => Outcome {
            status: if check.residual <= FLOAT_TOLERANCE && check.sub_residual <= FLOAT_TOLERANCE {
                VerifyStatus::Pass
            } else {
                VerifyStatus::Fail
            },
            residual: format!("{:e}", check.residual),
            sub_residual: format!("{:e}", check.sub_residual),
            configurations: check.configurations,
        },
        Err(err) => Outcome {
            residual: String::new(),
            sub_residual: String::new(),
            configurations: 0,
            status: status_of_error(&err)?,
        },
    })
}

/// Runs the `psi` identity for every `(n, lambda, rho)` and the `phi`
/// identity for every `(n, l, lambda)` in the grids. Cases whose window is too
/// small or too large become rows with the matching status.
pub fn run_verification(options: &VerifyOptions) -> Result<Vec<VerifyRow>, OracleError> {
    if options.n_max == 0 {
        return Err(OracleError::InvalidSpec("n-max must be positive"));
    }
    if options.ell_max == 0 {
        return Err(OracleError::InvalidSpec("ell-max must be positive"));
    }
    let w = options.window;
    let mut rows = Vec::new();
    for n in 1..=options.n_max {
        for &lambda in &LAMBDA_GRID {
            for &rho in &RHO_GRID {
                let (lr, rr) = (rational(lambda), rational(rho));
                let outcome = if options.exact {
                    exact_outcome(check_psi_identity(n, &lr, &rr, w))?
                } else {
                    let (lf, rf) = (lr.to_f64().unwrap_or(f64::NAN), rr.to_f64().unwrap_or(f64::NAN));
                    float_outcome(check_psi_identity(n, &lf, &rf, w))?
                };
                rows.push(VerifyRow {
                    identity: "psi",
                    n,
                    ell: None,
                    lambda: lr.to_string(),
                    rho: Some(rr.to_string()),
                    residual: outcome.residual,
                    sub_residual: outcome.sub_residual,
                    configurations: outcome.configurations,
                    status: outcome.status,
                });
            }
        }
    }
    for n in 1..=options.n_max {
        for ell in 1..=options.ell_max {
            for &lambda in &LAMBDA_GRID {
                let lr = rational(lambda);
                let outcome = if options.exact {
                    exact_outcome(check_phi_identity(n, ell, &lr, w))?
                } else {
                    float_outcome(check_phi_identity(n, ell, &lr.to_f64().unwrap_or(f64::NAN), w))?
                };
                rows.push(VerifyRow {
                    identity: "phi",
                    n,
                    ell: Some(ell),
                    lambda: lr.to_string(),
                    rho: None,
                    residual: outcome.residual,
                    sub_residual: outcome.sub_residual,
                    configurations: outcome.configurations,
                    status: outcome.status,
                });
            }
        }
    }
    Ok(rows)
}
