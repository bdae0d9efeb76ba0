//! Per-replica CSV rows and summary entries.
//!
//! The CSV starts with a `#` line naming the schema version and echoing every
//! parameter, then a column header, then one row per run. Reals are written
//! with 17 significant digits, so files compare byte for byte across runs.

use std::io::{self, Write};

use serde::Serialize;

use crate::walk::WalkRun;

pub const CSV_SCHEMA: &str = "ssepwalk-runs";
pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_COLUMNS: &str =
    "replica_id,env_id,T,X_T,jump_count,max_abs_X,occ_integral,qv_integral,y_integral,winding_flag";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunRow {
    pub replica_id: u64,
    pub env_id: u64,
    pub horizon: f64,
    pub position: i64,
    pub jump_count: u64,
    pub max_abs_position: i64,
    pub occ_integral: f64,
    pub qv_integral: f64,
    pub y_integral: f64,
    pub winding: bool,
}

impl RunRow {
    pub fn new(replica_id: u64, env_id: u64, run: &WalkRun) -> Self {
        let r = &run.realization;
        let f = &run.functionals;
        Self {
            replica_id,
            env_id,
            horizon: r.horizon,
            position: r.position,
            jump_count: r.jump_count,
            max_abs_position: r.max_abs_position,
            occ_integral: f.occ_integral,
            qv_integral: f.qv_integral,
            y_integral: f.y_integral,
            winding: r.winding,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.16e},{:.16e},{:.16e},{}",
            self.replica_id,
            self.env_id,
            self.horizon,
            self.position,
            self.jump_count,
            self.max_abs_position,
            self.occ_integral,
            self.qv_integral,
            self.y_integral,
            u8::from(self.winding)
        )
    }
}

/// `# ssepwalk-runs v1 key=value ...`
pub fn csv_preamble(echo: &[(&str, String)]) -> String {
    let mut line = format!("# {CSV_SCHEMA} v{CSV_SCHEMA_VERSION}");
    for (key, value) in echo {
        line.push(' ');
        line.push_str(key);
        line.push('=');
        line.push_str(value);
    }
    line
}

pub fn write_csv<W: Write>(mut out: W, echo: &[(&str, String)], rows: &[RunRow]) -> io::Result<()> {
    writeln!(out, "{}", csv_preamble(echo))?;
    writeln!(out, "{CSV_COLUMNS}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    out.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    /// Reported without a target.
    #[serde(rename = "N/A")]
    NotApplicable,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::NotApplicable => "N/A",
        }
    }
}

/// Acceptable distance from the target beyond the confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Tolerance {
    Absolute(f64),
    Relative(f64),
    StdErrors(f64),
}

impl Tolerance {
    pub fn width(&self, target: f64, se: f64) -> f64 {
        match *self {
            Self::Absolute(w) => w,
            Self::Relative(r) => r * target.abs(),
            Self::StdErrors(k) => k * se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateEntry {
    pub quantity: String,
    pub estimate: f64,
    pub se: f64,
    pub ci99: [f64; 2],
    pub target: Option<f64>,
    pub tolerance: Option<Tolerance>,
    pub verdict: Verdict,
}

impl EstimateEntry {
    /// PASS when the target lies in the 99% interval or within the tolerance.
    pub fn new(quantity: &str, estimate: f64, se: f64, target: Option<f64>, tolerance: Option<Tolerance>) -> Self {
        let half = crate::stats::ConfidenceLevel::P99.z() * se;
        let ci99 = [estimate - half, estimate + half];
        let verdict = match target {
            None => Verdict::NotApplicable,
            Some(t) => {
                let in_ci = ci99[0] <= t && t <= ci99[1];
                let in_tol = tolerance.is_some_and(|tol| (estimate - t).abs() <= tol.width(t, se));
                if in_ci || in_tol {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                }
            }
        };
        Self {
            quantity: quantity.to_string(),
            estimate,
            se,
            ci99,
            target,
            tolerance,
            verdict,
        }
    }

    /// Whether the estimate lies within the tolerance of the target, ignoring the interval.
    pub fn within_tolerance(&self) -> bool {
        match (self.target, self.tolerance) {
            (Some(t), Some(tol)) => (self.estimate - t).abs() <= tol.width(t, self.se),
            _ => false,
        }
    }

    pub fn target_in_ci(&self) -> bool {
        self.target.is_some_and(|t| self.ci99[0] <= t && t <= self.ci99[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_rules() {
        let e = EstimateEntry::new("x", 1.0, 0.1, Some(1.2), None);
        assert_eq!(e.verdict, Verdict::Pass);
        let e = EstimateEntry::new("x", 1.0, 0.01, Some(1.2), None);
        assert_eq!(e.verdict, Verdict::Fail);
        let e = EstimateEntry::new("x", 1.0, 0.01, Some(1.2), Some(Tolerance::Absolute(0.25)));
        assert_eq!(e.verdict, Verdict::Pass);
        let e = EstimateEntry::new("x", 1.0, 0.01, Some(1.2), Some(Tolerance::Relative(0.1)));
        assert_eq!(e.verdict, Verdict::Fail);
        let e = EstimateEntry::new("x", 1.0, 0.01, None, None);
        assert_eq!(e.verdict, Verdict::NotApplicable);
    }

    #[test]
    fn csv_line_round_trips_reals() {
        let row = RunRow {
            replica_id: 3,
            env_id: 0,
            horizon: 2000.0,
            position: -17,
            jump_count: 2671,
            max_abs_position: 40,
            occ_integral: 1333.0 / 3.0,
            qv_integral: 0.1 + 0.2,
            y_integral: -1e-300,
            winding: false,
        };
        let line = row.csv_line();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), CSV_COLUMNS.split(',').count());
        assert_eq!(fields[6].parse::<f64>().unwrap(), row.occ_integral);
        assert_eq!(fields[7].parse::<f64>().unwrap(), row.qv_integral);
        assert_eq!(fields[8].parse::<f64>().unwrap(), row.y_integral);
        assert_eq!(fields[9], "0");
    }

    #[test]
    fn preamble_echoes_parameters() {
        let line = csv_preamble(&[("rho", "0.5".into()), ("seed", "0xc0ffee".into())]);
        assert_eq!(line, "# ssepwalk-runs v1 rho=0.5 seed=0xc0ffee");
    }
}
