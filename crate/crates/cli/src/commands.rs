use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use ssep_walk::estimators::{
    decoupling_probe, rate_probe, sixth_moment_probe, BoxFunctional, DecouplingPlan, Pipeline,
};
use ssep_walk::oracle::{run_verification, OracleError, VerifyOptions, VerifyStatus};
use ssep_walk::report::write_csv;
use ssep_walk::ssep::sample_environment;
use ssep_walk::{
    derive_stream, read_log, run_annealed, run_quenched, simulate_joint, simulate_walk, write_log, EstimateEntry,
    ExperimentPlan, LatticeSpec, ModelParams, RunRow, SeedSpec, SimError, Verdict, WalkRun,
};

use crate::{
    CliError, Command, DecoupleArgs, FirstBox, MomentsArgs, QuenchedArgs, RateProbeArgs, RecordArgs, ReplayArgs,
    SimulateArgs, VerifyArgs,
};

pub const REPORT_SCHEMA: &str = "ssepwalk-report";
pub const REPORT_VERSION: u32 = 1;
pub const LOG_EXTENSION: &str = "sseplog";

/// Keys left out of the parameter echo: output locations and exit policy.
const NOT_ECHOED: [&str; 4] = ["out", "json", "log-out", "strict"];

pub fn execute(command: &Command) -> Result<(), CliError> {
    let echo = echo(command);
    match command {
        Command::Simulate(a) => simulate(a, &echo),
        Command::Quenched(a) => quenched(a, &echo),
        Command::Verify(a) => verify(a),
        Command::Record(a) => record(a, &echo),
        Command::Replay(a) => replay(a, &echo),
        Command::RateProbe(a) => rate(a, &echo),
        Command::Decouple(a) => decouple(a, &echo),
        Command::Moments(a) => moments(a, &echo),
    }
}

type Echo = Vec<(String, String)>;

fn echo(command: &Command) -> Echo {
    command
        .to_config()
        .values
        .into_iter()
        .filter(|(k, _)| !NOT_ECHOED.contains(&k.as_str()))
        .collect()
}

fn echo_refs(echo: &Echo) -> Vec<(&str, String)> {
    echo.iter().map(|(k, v)| (k.as_str(), v.clone())).collect()
}

fn echo_json(echo: &Echo) -> serde_json::Value {
    echo.iter()
        .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn json_path(out: &Path, json: &Option<PathBuf>) -> PathBuf {
    json.clone().unwrap_or_else(|| out.with_extension("json"))
}

fn write_json<T: Serialize>(mut file: BufWriter<File>, path: &Path, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut file, value)
        .map_err(|e| CliError::io(path, e.into()))?;
    writeln!(file)
        .and_then(|_| file.flush())
        .map_err(|e| CliError::io(path, e))
}

fn finish_csv(file: BufWriter<File>, path: &Path, echo: &Echo, rows: &[RunRow]) -> Result<(), CliError> {
    write_csv(file, &echo_refs(echo), rows).map_err(|e| CliError::io(path, e))
}

fn write_table(mut file: BufWriter<File>, path: &Path, echo: &Echo, header: &str, lines: &[String]) -> Result<(), CliError> {
    let mut body = || -> std::io::Result<()> {
        writeln!(file, "{}", ssep_walk::report::csv_preamble(&echo_refs(echo)))?;
        writeln!(file, "{header}")?;
        for line in lines {
            writeln!(file, "{line}")?;
        }
        file.flush()
    };
    body().map_err(|e| CliError::io(path, e))
}

fn params(rho: f64, lambda: f64) -> Result<ModelParams, CliError> {
    Ok(ModelParams::new(rho, lambda).map_err(SimError::from)?)
}

fn lattice(sites: Option<u32>, horizon: f64) -> Result<LatticeSpec, CliError> {
    match sites {
        Some(s) => Ok(LatticeSpec::new(s).map_err(SimError::from)?),
        None => Ok(LatticeSpec::for_horizon(horizon)),
    }
}

fn strict_check(strict: bool, passed: bool, what: &str) -> Result<(), CliError> {
    if strict && !passed {
        Err(CliError::Failed(format!("{what}: verdict FAIL under --strict")))
    } else {
        Ok(())
    }
}

fn print_entries(entries: &[EstimateEntry]) {
    println!(
        "{:<24} {:>14} {:>12} {:>30} {:>12}  verdict",
        "quantity", "estimate", "se", "ci99", "target"
    );
    for e in entries {
        let target = e.target.map_or_else(|| "-".to_string(), |t| format!("{t:.6}"));
        println!(
            "{:<24} {:>14.6} {:>12.3e} {:>30} {:>12}  {}",
            e.quantity,
            e.estimate,
            e.se,
            format!("[{:.6}, {:.6}]", e.ci99[0], e.ci99[1]),
            target,
            e.verdict.label()
        );
    }
}

fn warn_winding(count: usize) {
    if count > 0 {
        eprintln!("warning: {count} run(s) wrapped around the torus and were left out of the estimates");
    }
}

fn simulate(a: &SimulateArgs, echo: &Echo) -> Result<(), CliError> {
    let params = params(a.model.rho, a.model.lambda)?;
    let lattice = lattice(a.run.sites, a.run.horizon)?;
    let json_path = json_path(&a.out, &a.json);
    let csv = create(&a.out)?;
    let json_file = create(&json_path)?;

    let mut plan = ExperimentPlan::annealed(params, lattice, a.run.horizon, a.replicas, a.run.seed);
    plan.pipeline = if a.no_log { Pipeline::Streaming } else { Pipeline::TwoPhase };
    let (report, rows) = run_annealed(&plan)?;
    finish_csv(csv, &a.out, echo, &rows)?;

    let ks = report.ks.map(|k| {
        json!({"statistic": k.statistic, "p_value": k.p_value, "alpha": ssep_walk::estimators::KS_ALPHA, "verdict": report.ks_verdict})
    });
    let doc = json!({
        "schema": REPORT_SCHEMA,
        "version": REPORT_VERSION,
        "command": "simulate",
        "parameters": echo_json(echo),
        "L": lattice.sites,
        "replicas": report.replicas,
        "used": report.used,
        "winding_count": report.winding_count,
        "entries": report.entries,
        "ks": ks,
    });
    write_json(json_file, &json_path, &doc)?;

    println!(
        "simulate: rho={} lambda={} T={} L={} replicas={} used={}",
        params.rho, params.lambda, a.run.horizon, lattice.sites, report.replicas, report.used
    );
    print_entries(&report.entries);
    if let Some(k) = report.ks {
        println!("ks_normal D={:.5} p={:.4} {}", k.statistic, k.p_value, report.ks_verdict.label());
    }
    warn_winding(report.winding_count);
    println!("wrote {} and {}", a.out.display(), json_path.display());
    let passed = report.entries.iter().all(|e| e.verdict != Verdict::Fail) && report.ks_verdict != Verdict::Fail;
    strict_check(a.strict, passed, "simulate")
}

fn quenched(a: &QuenchedArgs, echo: &Echo) -> Result<(), CliError> {
    let params = params(a.model.rho, a.model.lambda)?;
    let lattice = lattice(a.run.sites, a.run.horizon)?;
    let plan = ExperimentPlan::quenched(params, lattice, a.run.horizon, a.environments, a.walks_per_env, a.run.seed);
    plan.validate()?;
    let json_path = json_path(&a.out, &a.json);
    let csv = create(&a.out)?;
    let json_file = create(&json_path)?;

    let (report, rows) = run_quenched(&plan)?;
    finish_csv(csv, &a.out, echo, &rows)?;
    let doc = json!({
        "schema": REPORT_SCHEMA,
        "version": REPORT_VERSION,
        "command": "quenched",
        "parameters": echo_json(echo),
        "L": lattice.sites,
        "environments": report.environments,
        "walks_per_env": report.walks_per_env,
        "winding_count": report.winding_count,
        "occ_dispersion": report.occ_dispersion,
        "occ_within_se": report.occ_within_se,
        "y_dispersion": report.y_dispersion,
        "y_within_se": report.y_within_se,
        "entries": [report.pooled_occupation],
        "per_env": report.per_env,
    });
    write_json(json_file, &json_path, &doc)?;

    println!(
        "quenched: rho={} lambda={} T={} L={} environments={} walks_per_env={}",
        params.rho, params.lambda, a.run.horizon, lattice.sites, a.environments, a.walks_per_env
    );
    println!("{:>6} {:>6} {:>12} {:>12} {:>12} {:>12}", "env", "walks", "occ/T", "se", "Y/T", "se");
    for e in &report.per_env {
        println!(
            "{:>6} {:>6} {:>12.6} {:>12.3e} {:>12.6} {:>12.3e}",
            e.env_id, e.walks_used, e.occ_mean, e.occ_se, e.y_mean, e.y_se
        );
    }
    println!(
        "occ dispersion {:.3e} (mean within-env se {:.3e}); Y dispersion {:.3e} (mean within-env se {:.3e})",
        report.occ_dispersion, report.occ_within_se, report.y_dispersion, report.y_within_se
    );
    print_entries(std::slice::from_ref(&report.pooled_occupation));
    warn_winding(report.winding_count);
    println!("wrote {} and {}", a.out.display(), json_path.display());
    strict_check(a.strict, report.pooled_occupation.verdict != Verdict::Fail, "quenched")
}

fn verify(a: &VerifyArgs) -> Result<(), CliError> {
    let options = VerifyOptions {
        n_max: a.n_max as usize,
        ell_max: a.ell_max as usize,
        window: a.window as usize,
        exact: a.exact,
    };
    let json_file = a.json.as_deref().map(create).transpose()?;
    let rows = run_verification(&options).map_err(|e| match e {
        OracleError::InvalidSpec(m) => CliError::Usage(m.to_string()),
        other => CliError::Usage(other.to_string()),
    })?;
    for row in &rows {
        println!("{}", row.line());
    }
    let failed = rows.iter().filter(|r| r.status != VerifyStatus::Pass).count();
    println!(
        "{} of {} cases pass ({} arithmetic)",
        rows.len() - failed,
        rows.len(),
        if a.exact { "exact rational" } else { "f64" }
    );
    if let (Some(file), Some(path)) = (json_file, a.json.as_deref()) {
        let doc = json!({
            "schema": "ssepwalk-verify",
            "version": REPORT_VERSION,
            "n_max": a.n_max,
            "ell_max": a.ell_max,
            "window": a.window,
            "exact": a.exact,
            "rows": rows,
        });
        write_json(file, path, &doc)?;
    }
    if failed > 0 {
        Err(CliError::Failed(format!("{failed} identity case(s) did not pass")))
    } else {
        Ok(())
    }
}

fn keep_wound(result: Result<WalkRun, SimError>) -> Result<WalkRun, SimError> {
    match result {
        Err(SimError::WindingOverflow(run)) => Ok(*run),
        other => other,
    }
}

fn log_file_name(index: u64) -> String {
    format!("env-{index:05}.{LOG_EXTENSION}")
}

fn record(a: &RecordArgs, echo: &Echo) -> Result<(), CliError> {
    let params = params(a.model.rho, a.model.lambda)?;
    let lattice = lattice(a.run.sites, a.run.horizon)?;
    if a.replicas == 0 {
        return Err(CliError::Usage("--replicas must be at least 1".into()));
    }
    let csv = a.out.as_deref().map(create).transpose()?;
    if a.replicas > 1 {
        fs::create_dir_all(&a.log_out).map_err(|e| CliError::io(&a.log_out, e))?;
    }
    let mut rows = Vec::with_capacity(a.replicas);
    let mut wound = 0;
    for i in 0..a.replicas as u64 {
        let env = SeedSpec::environment(a.run.seed, i);
        let walk = SeedSpec::walk(a.run.seed, i);
        let (log, run) = match simulate_joint(&params, lattice, a.run.horizon, env, walk, true) {
            Ok(joint) => (joint.log.expect("log requested"), joint.run),
            Err(SimError::WindingOverflow(run)) => {
                wound += 1;
                (sample_environment(params.rho, lattice, a.run.horizon, env), *run)
            }
            Err(e) => return Err(e.into()),
        };
        let path = if a.replicas == 1 {
            a.log_out.clone()
        } else {
            a.log_out.join(log_file_name(i))
        };
        let file = create(&path)?;
        write_log(&log, file).map_err(|e| CliError::io(&path, e))?;
        rows.push(RunRow::new(i, i, &run));
    }
    if let (Some(file), Some(path)) = (csv, a.out.as_deref()) {
        finish_csv(file, path, echo, &rows)?;
    }
    warn_winding(wound);
    println!("recorded {} environment log(s) under {}", a.replicas, a.log_out.display());
    Ok(())
}

fn log_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| CliError::io(input, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == LOG_EXTENSION))
                .collect();
            found.sort();
            paths.extend(found);
        } else {
            paths.push(input.clone());
        }
    }
    if paths.is_empty() {
        return Err(CliError::Usage("no log files found".into()));
    }
    Ok(paths)
}

fn replay(a: &ReplayArgs, echo: &Echo) -> Result<(), CliError> {
    let paths = log_paths(&a.log_in)?;
    if a.walk_id.is_some() && paths.len() > 1 {
        return Err(CliError::Usage("--walk-id needs a single log".into()));
    }
    let csv = create(&a.out)?;
    let mut rows = Vec::with_capacity(paths.len());
    let mut wound = 0;
    for path in &paths {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let log = read_log(BufReader::new(file)).map_err(|source| CliError::MalformedLog {
            path: path.clone(),
            source,
        })?;
        let params = params(log.rho, a.lambda)?;
        let env_id = log.seed.stream_id;
        let walk_id = a.walk_id.unwrap_or(env_id);
        let walk = SeedSpec::walk(a.seed.unwrap_or(log.seed.master_seed), walk_id);
        let run = keep_wound(simulate_walk(&log, &params, derive_stream(&walk)))?;
        wound += usize::from(run.realization.winding);
        rows.push(RunRow::new(walk_id, env_id, &run));
    }
    finish_csv(csv, &a.out, echo, &rows)?;
    warn_winding(wound);
    println!("replayed {} log(s) into {}", rows.len(), a.out.display());
    Ok(())
}

fn grid_lattice(sites: Option<u32>, grid: &[f64]) -> Result<LatticeSpec, CliError> {
    lattice(sites, grid.iter().copied().fold(0.0, f64::max))
}

fn rate(a: &RateProbeArgs, echo: &Echo) -> Result<(), CliError> {
    let params = params(a.model.rho, a.model.lambda)?;
    let lattice = grid_lattice(a.sites, &a.t_grid)?;
    if !(a.epsilon >= 0.0) {
        return Err(CliError::Usage("--epsilon must be non-negative".into()));
    }
    let json_path = json_path(&a.out, &a.json);
    let csv = create(&a.out)?;
    let json_file = create(&json_path)?;
    let horizon = a.t_grid.last().copied().unwrap_or(0.0);
    let mut plan = ExperimentPlan::annealed(params, lattice, horizon, a.replicas, a.seed);
    plan.t_grid = a.t_grid.clone();
    let report = rate_probe(&plan, a.epsilon)?;

    let lines: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{:.16e},{:.16e},{:.16e},{}",
                r.t, r.trials, r.exceedances, r.probability, r.wilson95[0], r.wilson95[1], r.winding_count
            )
        })
        .collect();
    write_table(
        csv,
        &a.out,
        echo,
        "t,trials,exceedances,probability,wilson95_lo,wilson95_hi,winding_count",
        &lines,
    )?;
    let verdict = if report.non_increasing { Verdict::Pass } else { Verdict::Fail };
    let doc = json!({
        "schema": REPORT_SCHEMA,
        "version": REPORT_VERSION,
        "command": "rate-probe",
        "parameters": echo_json(echo),
        "L": lattice.sites,
        "epsilon": report.epsilon,
        "rows": report.rows,
        "non_increasing": report.non_increasing,
        "verdict": verdict,
    });
    write_json(json_file, &json_path, &doc)?;

    println!("rate-probe: P(|Y_t|/t >= {}) with Wilson 95% intervals, L={}", a.epsilon, lattice.sites);
    for r in &report.rows {
        println!(
            "t={:<8} {:>5}/{:<5} p={:.4} [{:.4}, {:.4}]",
            r.t, r.exceedances, r.trials, r.probability, r.wilson95[0], r.wilson95[1]
        );
        warn_winding(r.winding_count);
    }
    println!("non-increasing within intervals: {}", verdict.label());
    strict_check(a.strict, report.non_increasing, "rate-probe")
}

fn moments(a: &MomentsArgs, echo: &Echo) -> Result<(), CliError> {
    let params = params(a.model.rho, a.model.lambda)?;
    let lattice = grid_lattice(a.sites, &a.t_grid)?;
    let json_path = json_path(&a.out, &a.json);
    let csv = create(&a.out)?;
    let json_file = create(&json_path)?;
    let report = sixth_moment_probe(&params, lattice, &a.t_grid, a.replicas, a.seed)?;

    let lines: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.t,
                r.used,
                r.winding_count,
                r.ratio,
                r.ratio_se,
                r.jump_bound_ratio,
                r.poisson_bound_ratio,
                r.max_ratio,
                r.doob_cap,
                u8::from(r.dominated)
            )
        })
        .collect();
    write_table(
        csv,
        &a.out,
        echo,
        "t,used,winding_count,ratio,ratio_se,jump_bound_ratio,poisson_bound_ratio,max_ratio,doob_cap,dominated",
        &lines,
    )?;
    let passed = report.bounded && report.dominated;
    let doc = json!({
        "schema": REPORT_SCHEMA,
        "version": REPORT_VERSION,
        "command": "moments",
        "parameters": echo_json(echo),
        "L": lattice.sites,
        "rows": report.rows,
        "bounded": report.bounded,
        "dominated": report.dominated,
        "verdict": if passed { Verdict::Pass } else { Verdict::Fail },
    });
    write_json(json_file, &json_path, &doc)?;

    println!("moments: E[X_t^6]/t^3, L={}", lattice.sites);
    for r in &report.rows {
        println!(
            "t={:<8} ratio={:.4} se={:.4} jump-bound={:.2} poisson-bound={:.2} max-ratio={:.4} doob-cap={:.4}",
            r.t, r.ratio, r.ratio_se, r.jump_bound_ratio, r.poisson_bound_ratio, r.max_ratio, r.doob_cap
        );
        warn_winding(r.winding_count);
    }
    println!("bounded: {}  dominated: {}", report.bounded, report.dominated);
    strict_check(a.strict, passed, "moments")
}

fn decouple(a: &DecoupleArgs, echo: &Echo) -> Result<(), CliError> {
    let separations = a
        .separations
        .clone()
        .unwrap_or_else(|| vec![f64::from(a.h).powf(0.6).ceil() as i64]);
    let span = separations.iter().map(|y| y.abs()).max().unwrap_or(0) + 2 * i64::from(a.h) + 2;
    let sites = match a.sites {
        Some(s) => s,
        None => {
            let wanted = u32::try_from(2 * span).map_err(|_| CliError::Usage("boxes too large".into()))?;
            (wanted + wanted % 2).max(512)
        }
    };
    let lattice = LatticeSpec::new(sites).map_err(SimError::from)?;
    let first = match a.first {
        FirstBox::Density => BoxFunctional::DensityAboveRho,
        FirstBox::Constant => BoxFunctional::Constant(a.constant),
    };
    let plan = DecouplingPlan {
        rho: a.rho,
        lattice,
        h: a.h,
        separations,
        replicas: a.replicas,
        master_seed: a.seed,
        first,
        second: BoxFunctional::DensityAboveRho,
    };
    let json_path = json_path(&a.out, &a.json);
    let csv = create(&a.out)?;
    let json_file = create(&json_path)?;
    let report = decoupling_probe(&plan)?;

    let verdict = |cov: f64| if cov.abs() <= a.max_abs_cov { Verdict::Pass } else { Verdict::Fail };
    let lines: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.y,
                r.covariance,
                r.se,
                r.ci99[0],
                r.ci99[1],
                r.first_mean,
                r.second_mean,
                verdict(r.covariance).label()
            )
        })
        .collect();
    write_table(
        csv,
        &a.out,
        echo,
        "y,covariance,se,ci99_lo,ci99_hi,first_mean,second_mean,verdict",
        &lines,
    )?;
    let entries: Vec<serde_json::Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "quantity": format!("covariance_y{}", r.y),
                "estimate": r.covariance,
                "se": r.se,
                "ci99": r.ci99,
                "target": 0.0,
                "tolerance": {"kind": "absolute", "value": a.max_abs_cov},
                "verdict": verdict(r.covariance),
            })
        })
        .collect();
    let doc = json!({
        "schema": REPORT_SCHEMA,
        "version": REPORT_VERSION,
        "command": "decouple",
        "parameters": echo_json(echo),
        "L": lattice.sites,
        "entries": entries,
        "rows": report.rows,
    });
    write_json(json_file, &json_path, &doc)?;

    println!("decouple: H={} replicas={} L={}", report.h, report.replicas, lattice.sites);
    for r in &report.rows {
        println!(
            "y={:<5} cov={:+.5} se={:.5} ci99=[{:+.5}, {:+.5}] {}",
            r.y,
            r.covariance,
            r.se,
            r.ci99[0],
            r.ci99[1],
            verdict(r.covariance).label()
        );
    }
    let passed = report.rows.iter().all(|r| verdict(r.covariance) == Verdict::Pass);
    strict_check(a.strict, passed, "decouple")
}
