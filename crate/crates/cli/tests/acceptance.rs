//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with `harness = false` and reports rather than asserts, so a failing
//! criterion shows up in the output without masking the others. Set
//! `ACCEPTANCE_STRICT=1` to turn any FAIL into a non-zero exit status.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ssep_walk::estimators::{decoupling_probe, rate_probe, sixth_moment_probe, BoxFunctional, DecouplingPlan};
use ssep_walk::{
    run_annealed, run_quenched, theoretical_targets, EstimateReport, ExperimentPlan, LatticeSpec, ModelParams,
};

const SEED: u64 = 0xC0FFEE;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn params(rho: f64, lambda: f64) -> ModelParams {
    ModelParams::new(rho, lambda).expect("grid parameters are valid")
}

fn ssepwalk(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ssepwalk"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn c1_generator_identities() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let start = Instant::now();
    let out = ssepwalk(
        dir.path(),
        &["verify", "--n-max", "4", "--ell-max", "3", "--window", "9", "--exact", "--json", "verify.json"],
    );
    let elapsed = start.elapsed().as_secs_f64();
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("verify.json")).unwrap_or_default()).unwrap_or_default();
    let rows = json["rows"].as_array().cloned().unwrap_or_default();
    let zero = rows
        .iter()
        .filter(|r| r["residual"] == "0" && r["status"] == "PASS")
        .count();
    let passed = out.status.code() == Some(0) && !rows.is_empty() && zero == rows.len() && elapsed < 60.0;
    outcome(
        passed,
        format!("{zero}/{} exact residuals are 0 (window 19 sites), {elapsed:.1}s < 60s", rows.len()),
    )
}

fn c2_occupation() -> Outcome {
    let plan = ExperimentPlan::annealed(params(0.5, 1.0), LatticeSpec::new(4096).unwrap(), 2000.0, 200, SEED);
    let (report, _) = run_annealed(&plan).expect("criterion 2 runs");
    let occ = report.entry("occupation_fraction").unwrap();
    let target = 2.0 / 3.0;
    outcome(
        (occ.estimate - target).abs() <= 0.01,
        format!(
            "occ/T = {:.5} (se {:.5}), target {target:.5} +- 0.01, L=4096 T=2000 R=200, winding {}",
            occ.estimate, occ.se, report.winding_count
        ),
    )
}

const GRID: [(f64, f64); 6] = [(0.25, 0.5), (0.25, 1.0), (0.5, 0.5), (0.5, 1.0), (0.75, 0.5), (0.75, 1.0)];

fn grid_reports() -> Vec<((f64, f64), EstimateReport)> {
    GRID.iter()
        .map(|&(rho, lambda)| {
            let plan = ExperimentPlan::annealed(params(rho, lambda), LatticeSpec::for_horizon(2000.0), 2000.0, 500, SEED);
            ((rho, lambda), run_annealed(&plan).expect("grid point runs").0)
        })
        .collect()
}

fn c3_diffusivity(grid: &[((f64, f64), EstimateReport)]) -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for ((rho, lambda), report) in grid {
        let var = report.entry("variance_rate").unwrap();
        let qv = report.entry("qv_rate").unwrap();
        let target = var.target.unwrap();
        let var_rel = (var.estimate - target) / target;
        let qv_rel = (qv.estimate - target) / target;
        let ok = var_rel.abs() <= 0.05 && qv_rel.abs() <= 0.01;
        passed &= ok;
        parts.push(format!(
            "({rho},{lambda}) sigma2={target:.4} var/T={:.4} [{:+.1}%, target in ci99: {}] qv/T={:.4} [{:+.2}%]{}",
            var.estimate,
            100.0 * var_rel,
            var.target_in_ci(),
            qv.estimate,
            100.0 * qv_rel,
            if ok { "" } else { " <- outside" }
        ));
    }
    let anchors = [(0.3, 0.0, 2.0), (0.8, 0.0, 2.0), (1.0, 0.5, 1.0), (1.0, 1.0, 0.0), (1.0, 0.25, 1.5)];
    let anchors_ok = anchors
        .iter()
        .all(|&(rho, lambda, s)| (theoretical_targets(&params(rho, lambda)).sigma_sq - s).abs() < 1e-15);
    let frozen = ExperimentPlan::annealed(params(1.0, 0.25), LatticeSpec::for_horizon(2000.0), 2000.0, 500, SEED);
    let (full, _) = run_annealed(&frozen).expect("anchor runs");
    let full_var = full.entry("variance_rate").unwrap();
    let full_qv = full.entry("qv_rate").unwrap();
    let anchor_run_ok = (full_qv.estimate - 1.5).abs() < 1e-12 && full_var.target_in_ci();
    parts.push(format!(
        "anchors: sigma2(lambda=0)=2 and sigma2(rho=1)=2(1-lambda) {}; rho=1 lambda=0.25 run qv/T={:.6} var/T={:.4} (ci99 [{:.4}, {:.4}])",
        if anchors_ok { "exact" } else { "WRONG" },
        full_qv.estimate,
        full_var.estimate,
        full_var.ci99[0],
        full_var.ci99[1]
    ));
    outcome(passed && anchors_ok && anchor_run_ok, parts.join("\n    "))
}

fn c4_normality(grid: &[((f64, f64), EstimateReport)]) -> Outcome {
    let (_, report) = grid.iter().find(|(p, _)| *p == (0.5, 1.0)).unwrap();
    match report.ks {
        Some(ks) => outcome(
            ks.p_value >= 0.01,
            format!("KS D={:.4} p={:.4} (alpha 0.01), R={} T=2000", ks.statistic, ks.p_value, report.used),
        ),
        None => outcome(false, "no KS result"),
    }
}

fn c5_martingales(grid: &[((f64, f64), EstimateReport)]) -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for ((rho, lambda), report) in grid {
        let z = |name: &str| {
            let e = report.entry(name).unwrap();
            e.estimate / e.se
        };
        let (zx, zq, zn) = (z("mean_position"), z("second_moment_minus_qv"), z("compensated_jumps"));
        let ok = zx.abs() <= 4.0 && zq.abs() <= 4.0 && zn.abs() <= 4.0;
        passed &= ok;
        parts.push(format!("({rho},{lambda}) z[X]={zx:+.2} z[X^2-qv]={zq:+.2} z[N-qv]={zn:+.2}"));
    }
    outcome(passed, parts.join("; "))
}

fn c6_quenched() -> Outcome {
    let lattice = LatticeSpec::for_horizon(5000.0);
    let run = |t: f64| {
        let plan = ExperimentPlan::quenched(params(0.5, 1.0), lattice, t, 20, 100, SEED);
        run_quenched(&plan).expect("quenched runs").0
    };
    let long = run(5000.0);
    let short = run(1250.0);
    let target = 2.0 / 3.0;
    let worst = long
        .per_env
        .iter()
        .map(|e| (e.occ_mean - target).abs())
        .fold(0.0, f64::max);
    let within = long.per_env.iter().all(|e| (e.occ_mean - target).abs() <= 0.02);
    let shrinks = long.occ_dispersion < short.occ_dispersion;
    outcome(
        within && shrinks,
        format!(
            "E=20 W=100: max |quenched occ/T - 2/3| = {worst:.4} (<= 0.02); dispersion T=1250 {:.5} -> T=5000 {:.5}",
            short.occ_dispersion, long.occ_dispersion
        ),
    )
}

fn c7_rate() -> Outcome {
    let mut plan = ExperimentPlan::annealed(params(0.5, 1.0), LatticeSpec::for_horizon(4000.0), 4000.0, 400, SEED);
    plan.t_grid = vec![250.0, 1000.0, 4000.0];
    let report = rate_probe(&plan, 0.05).expect("rate probe runs");
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("t={} p={:.4} [{:.4}, {:.4}]", r.t, r.probability, r.wilson95[0], r.wilson95[1]))
        .collect();
    outcome(report.non_increasing, format!("P(|Y_t|/t >= 0.05): {}", rows.join(", ")))
}

fn c8_sixth_moment() -> Outcome {
    let grid = [100.0, 400.0, 1600.0];
    let report = sixth_moment_probe(&params(0.5, 0.5), LatticeSpec::for_horizon(1600.0), &grid, 500, SEED)
        .expect("moment probe runs");
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "t={} E[X^6]/t^3={:.3}+-{:.3} <= E[J+15J^2+90J^3]/t^3={:.1}",
                r.t, r.ratio, r.ratio_se, r.jump_bound_ratio
            )
        })
        .collect();
    outcome(
        report.bounded && report.dominated,
        format!("(0.5,0.5) {}; bounded {} dominated {}", rows.join(", "), report.bounded, report.dominated),
    )
}

fn c9_decoupling() -> Outcome {
    let h = 64u32;
    let y = f64::from(h).powf(0.6).ceil() as i64;
    let plan = DecouplingPlan {
        rho: 0.5,
        lattice: LatticeSpec::new(512).unwrap(),
        h,
        separations: vec![y],
        replicas: 2000,
        master_seed: SEED,
        first: BoxFunctional::DensityAboveRho,
        second: BoxFunctional::DensityAboveRho,
    };
    let report = decoupling_probe(&plan).expect("decoupling runs");
    let row = report.rows[0];
    outcome(
        row.covariance.abs() <= 0.05,
        format!(
            "H=64 y={y} R=2000: cov={:+.5} (se {:.5}, ci99 [{:+.5}, {:+.5}]), |cov| <= 0.05",
            row.covariance, row.se, row.ci99[0], row.ci99[1]
        ),
    )
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let model = ["--rho", "0.5", "--lambda", "1", "--T", "2000", "--replicas", "16", "--seed", "0xC0FFEE"];
    let mut ok = true;
    for out in ["a.csv", "b.csv"] {
        let mut args = vec!["simulate"];
        args.extend(model);
        args.extend(["--out", out]);
        ok &= ssepwalk(dir.path(), &args).status.success();
    }
    let mut args = vec!["record"];
    args.extend(model);
    args.extend(["--log-out", "logs"]);
    ok &= ssepwalk(dir.path(), &args).status.success();
    ok &= ssepwalk(dir.path(), &["replay", "--log-in", "logs", "--lambda", "1", "--out", "replay.csv"])
        .status
        .success();
    let read = |name: &str| fs::read(dir.path().join(name)).unwrap_or_default();
    let body = |name: &str| -> Vec<String> {
        String::from_utf8_lossy(&read(name)).lines().skip(2).map(str::to_string).collect()
    };
    let same_reports = read("a.csv") == read("b.csv") && read("a.json") == read("b.json") && !read("a.json").is_empty();
    let replayed = body("a.csv");
    let same_rows = replayed.len() == 16 && body("replay.csv") == replayed;
    outcome(
        ok && same_reports && same_rows,
        format!(
            "same seed: CSV and JSON byte-identical {same_reports}; record->replay rows byte-identical {same_rows} ({} rows)",
            replayed.len()
        ),
    )
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut failures = 0;
    let mut report = |number: u32, name: &str, start: Instant, result: Outcome| {
        let label = if result.passed { "PASS" } else { "FAIL" };
        failures += usize::from(!result.passed);
        println!(
            "criterion {number:>2} {name}: {label} [{:.1}s]\n    {}",
            start.elapsed().as_secs_f64(),
            result.detail
        );
    };
    let start = Instant::now();
    report(1, "exact generator identities", start, c1_generator_identities());
    let start = Instant::now();
    report(2, "occupation fraction", start, c2_occupation());
    let start = Instant::now();
    let grid = grid_reports();
    report(3, "diffusivity", start, c3_diffusivity(&grid));
    let start = Instant::now();
    report(4, "normality", start, c4_normality(&grid));
    report(5, "martingale checks", start, c5_martingales(&grid));
    let start = Instant::now();
    report(6, "quenched concentration", start, c6_quenched());
    let start = Instant::now();
    report(7, "rate probe", start, c7_rate());
    let start = Instant::now();
    report(8, "sixth-moment bound", start, c8_sixth_moment());
    let start = Instant::now();
    report(9, "decoupling", start, c9_decoupling());
    let start = Instant::now();
    report(10, "determinism and replay", start, c10_determinism());
    println!("acceptance: {} of 10 criteria pass", 10 - failures);
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failures > 0 {
        std::process::exit(1);
    }
}
