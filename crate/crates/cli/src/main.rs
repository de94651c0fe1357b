//! `pv-lab`: command-line entry points of the Poisson-Voronoi simulation lab.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 failed check in `selftest`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use pv_lab::chaos::{
    first_chaos_lower_bound, first_chaos_norm, f2_probe, kernel_scan, random_pairs, KernelSpec,
};
use pv_lab::config::{parse_config, ExperimentConfig};
use pv_lab::estimator::EstimatorWindows;
use pv_lab::exact2d::geometry_dump;
use pv_lab::geometry::ConvexBody;
use pv_lab::process::{derive_stream, role, sample_poisson};
use pv_lab::selftest::run_selftest;
use pv_lab::stats::{
    oracle_comparison, replication_id, run_campaign, small_body_experiment, CampaignConfig, CampaignResult,
    OracleConfig, SmallBodyConfig, SCHEMA,
};

/// CLT acceptance thresholds reported by `clt-test`.
const KS_P_MIN: f64 = 0.01;
const SKEW_MAX: f64 = 0.15;
const KURT_MAX: f64 = 0.3;
/// Standard errors allowed between an estimate and its reference.
const Z_TOL: f64 = 4.0;

#[derive(Parser)]
#[command(name = "pv-lab", version, about = "Poisson-Voronoi approximation simulation lab")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON experiment configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    /// ball, box, ellipse or polygon. Without this or --config the body is the unit disk.
    #[arg(long, global = true)]
    shape: Option<String>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    radius: Option<f64>,
    /// Comma-separated intensity grid.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    lambda: Option<Vec<f64>>,
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// mc or exact2d.
    #[arg(long, global = true)]
    estimator: Option<String>,
    /// plain, jittered or control_variate.
    #[arg(long, global = true)]
    query_scheme: Option<String>,
    #[arg(long, global = true)]
    query_factor: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// One campaign: raw replications and summary statistics.
    Simulate,
    /// Campaign over at least three intensities with a log-log variance fit.
    VarianceSweep,
    /// Campaign with normality diagnostics.
    CltTest,
    /// First-order kernel along a segment, with envelopes.
    KernelScan,
    /// Second-order kernel at point pairs, with envelopes.
    F2Probe,
    /// Monte Carlo against the exact planar computation.
    Exact2d {
        /// Also write the Voronoi geometry of the first realization.
        #[arg(long)]
        dump: bool,
    },
    /// Variance at fixed intensity for shrinking copies of the body.
    SmallBody,
    /// First chaos norm against its explicit lower bound.
    FirstChaos,
    /// Built-in property suite.
    Selftest,
}

enum Failure {
    Config(String),
    Runtime(String),
    Check,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Check => 3,
        }
    }
}

type Outcome = Result<(), Failure>;

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("configuration error: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
                Failure::Check => eprintln!("selftest failed"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(config_err("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(runtime)?;
    }
    if let Command::Selftest = cli.command {
        return selftest(cli.global.seed.unwrap_or(0));
    }
    let config = load_config(&cli.global)?;
    let out = PathBuf::from(&config.out);
    match cli.command {
        Command::Simulate => simulate(&config, &out, "simulate"),
        Command::VarianceSweep => variance_sweep(&config, &out),
        Command::CltTest => clt_test(&config, &out),
        Command::KernelScan => kernel_scan_cmd(&config, &out),
        Command::F2Probe => f2_probe_cmd(&config, &out),
        Command::Exact2d { dump } => exact2d(&config, &out, dump),
        Command::SmallBody => small_body(&config, &out),
        Command::FirstChaos => first_chaos(&config, &out),
        Command::Selftest => unreachable!(),
    }
}

/// Reads the configuration file (if any), overlays flags and validates.
fn load_config(g: &GlobalArgs) -> Result<ExperimentConfig, Failure> {
    let mut doc = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<Value>(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        None => json!({}),
    };
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| config_err("$: configuration must be a JSON object"))?;
    let mut set = |key: &str, v: Option<Value>| {
        if let Some(v) = v {
            obj.insert(key.to_string(), v);
        }
    };
    set("shape", g.shape.clone().map(Value::from));
    set("dim", g.dim.map(Value::from));
    set("radius", g.radius.map(Value::from));
    set("lambda", g.lambda.clone().map(Value::from));
    set("replications", g.replications.map(Value::from));
    set("seed", g.seed.map(Value::from));
    set("epsilon", g.epsilon.map(Value::from));
    set("estimator", g.estimator.clone().map(Value::from));
    set("query_scheme", g.query_scheme.clone().map(Value::from));
    set("query_factor", g.query_factor.map(Value::from));
    set("out", g.out.as_ref().map(|p| Value::from(p.to_string_lossy().into_owned())));
    if !obj.contains_key("shape") {
        obj.insert("shape".into(), "ball".into());
        obj.entry("radius").or_insert(1.0.into());
    }
    obj.entry("dim").or_insert(2.into());
    parse_config(&doc.to_string()).map_err(config_err)
}

fn campaign_config(c: &ExperimentConfig) -> CampaignConfig {
    CampaignConfig {
        body: c.body(),
        lambdas: c.lambda.clone(),
        replications: c.replications,
        estimator: c.estimator,
        scheme: c.query_scheme,
        query_factor: c.query_factor,
        epsilon: c.epsilon,
        seed: c.seed,
    }
}

fn kernel_spec(c: &ExperimentConfig, n_outer: usize, n_query: usize) -> KernelSpec {
    KernelSpec {
        lambda: c.lambda[0],
        n_outer,
        n_query,
        epsilon: c.epsilon,
        seed: c.seed,
    }
}

fn write(path: &Path, bytes: &[u8]) -> Outcome {
    fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn prepare_out(config: &ExperimentConfig, out: &Path) -> Outcome {
    fs::create_dir_all(out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    write(&out.join("config.json"), (config.to_json() + "\n").as_bytes())
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, Failure> {
    serde_json::to_value(v).map_err(runtime)
}

/// Writes `summary.json`: `fields` plus the command name, schema and config echo.
fn write_summary(config: &ExperimentConfig, out: &Path, command: &str, fields: Value) -> Outcome {
    let mut doc = match fields {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("result".into(), other);
            m
        }
    };
    doc.insert("schema".into(), SCHEMA.into());
    doc.insert("command".into(), command.into());
    doc.insert("config".into(), to_value(config)?);
    let text = serde_json::to_string_pretty(&Value::Object(doc)).map_err(runtime)?;
    write(&out.join("summary.json"), (text + "\n").as_bytes())
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Outcome {
    let mut w = csv::Writer::from_path(path).map_err(runtime)?;
    for row in rows {
        w.serialize(row).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn campaign(config: &ExperimentConfig, out: &Path) -> Result<CampaignResult, Failure> {
    let cc = campaign_config(config);
    cc.validate().map_err(config_err)?;
    prepare_out(config, out)?;
    let res = run_campaign(&cc).map_err(runtime)?;
    let mut buf = Vec::new();
    res.write_csv(&mut buf).map_err(runtime)?;
    write(&out.join("replications.csv"), &buf)?;
    Ok(res)
}

fn print_campaign(res: &CampaignResult) {
    println!("{:>10} {:>12} {:>10} {:>7} {:>12} {:>12}", "lambda", "mean", "mean_se", "z", "var", "var_se");
    for s in &res.summary.per_lambda {
        println!(
            "{:>10} {:>12.6} {:>10.2e} {:>7.2} {:>12.4e} {:>12.2e}",
            s.lambda, s.mean, s.mean_se, s.z_mean, s.var, s.var_se
        );
    }
}

fn simulate(config: &ExperimentConfig, out: &Path, command: &str) -> Outcome {
    let res = campaign(config, out)?;
    print_campaign(&res);
    write_summary(config, out, command, to_value(&res.summary)?)
}

fn variance_sweep(config: &ExperimentConfig, out: &Path) -> Outcome {
    if config.lambda.len() < 3 {
        return Err(config_err(format!(
            "lambda: variance-sweep needs at least 3 intensities, got {}",
            config.lambda.len()
        )));
    }
    let res = campaign(config, out)?;
    print_campaign(&res);
    let body = config.body();
    let d = body.dim() as f64;
    let target = -1.0 - 1.0 / d;
    let lower: Vec<Value> = res
        .summary
        .per_lambda
        .iter()
        .map(|s| {
            json!({
                "lambda": s.lambda,
                "var_pv": s.var_pv,
                "lower_bound": first_chaos_lower_bound(&body, s.lambda),
                "lower_bound_applies": s.lambda >= pv_lab::chaos::lower_bound_threshold(&body),
            })
        })
        .collect();
    match &res.summary.fit {
        Some(fit) => println!(
            "slope {:.4} +- {:.4} (target {target:.4}), r2 {:.4}",
            fit.slope, fit.slope_se, fit.r2
        ),
        None => println!("no fit: nonpositive variance on the grid"),
    }
    if let Some(shape) = &res.summary.shape {
        println!("spread of var * lambda^(1+1/d): {:.3}", shape.scaled_var_spread);
    }
    let mut doc = to_value(&res.summary)?;
    doc["report"] = json!({
        "target_slope": target,
        "lower_bounds": lower,
    });
    write_summary(config, out, "variance-sweep", doc)
}

fn clt_test(config: &ExperimentConfig, out: &Path) -> Outcome {
    let res = campaign(config, out)?;
    let mut report = Vec::new();
    println!("{:>10} {:>8} {:>8} {:>8} {:>8}", "lambda", "ks_D", "ks_p", "skew", "kurt");
    for s in &res.summary.per_lambda {
        let ks_ok = s.ks_p.is_some_and(|p| p > KS_P_MIN);
        let skew_ok = s.skew.is_some_and(|v| v.abs() < SKEW_MAX);
        let kurt_ok = s.kurt.is_some_and(|v| v.abs() < KURT_MAX);
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:>10} {:>8} {:>8} {:>8} {:>8}",
            s.lambda,
            fmt(s.ks_d),
            fmt(s.ks_p),
            fmt(s.skew),
            fmt(s.kurt)
        );
        report.push(json!({
            "lambda": s.lambda,
            "ks_p_above": KS_P_MIN,
            "skew_below": SKEW_MAX,
            "kurt_below": KURT_MAX,
            "ks_ok": ks_ok,
            "skew_ok": skew_ok,
            "kurt_ok": kurt_ok,
        }));
    }
    let mut doc = to_value(&res.summary)?;
    doc["report"] = Value::from(report);
    write_summary(config, out, "clt-test", doc)
}

fn csv_f(v: f64) -> String {
    format!("{v}")
}

fn kernel_scan_cmd(config: &ExperimentConfig, out: &Path) -> Outcome {
    let ks = &config.kernel_scan;
    let body = config.body();
    let (start, end) = (
        ks.start.clone().expect("resolved config has a scan start"),
        ks.end.clone().expect("resolved config has a scan end"),
    );
    let n = ks.points;
    let points: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let t = if n > 1 { j as f64 / (n - 1) as f64 } else { 0.5 };
            start.iter().zip(&end).map(|(a, b)| a + t * (b - a)).collect()
        })
        .collect();
    prepare_out(config, out)?;
    let spec = kernel_spec(config, ks.n_outer, ks.n_query);
    let rows = kernel_scan(&body, &points, &spec).map_err(runtime)?;

    let d = body.dim();
    let mut w = csv::Writer::from_path(out.join("kernel_scan.csv")).map_err(runtime)?;
    let mut header: Vec<String> = vec!["point".into()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.extend(
        ["inside", "boundary_distance", "f1_hat", "stderr", "bound_43", "bound_44", "consistent"].map(String::from),
    );
    w.write_record(&header).map_err(runtime)?;
    for (j, row) in rows.iter().enumerate() {
        let mut rec = vec![j.to_string()];
        rec.extend(row.x.iter().map(|v| csv_f(*v)));
        rec.push(row.inside.to_string());
        rec.push(csv_f(body.boundary_distance(&row.x)));
        rec.push(csv_f(row.f1_hat));
        rec.push(csv_f(row.stderr));
        rec.push(csv_f(row.bound_43));
        rec.push(row.bound_44.map(csv_f).unwrap_or_default());
        rec.push(row.consistent(Z_TOL).to_string());
        w.write_record(&rec).map_err(runtime)?;
    }
    w.flush().map_err(runtime)?;

    let consistent = rows.iter().filter(|r| r.consistent(Z_TOL)).count();
    println!("{consistent} of {} points consistent with sign and envelopes at {Z_TOL} stderr", rows.len());
    write_summary(
        config,
        out,
        "kernel-scan",
        json!({
            "lambda": spec.lambda,
            "points": rows.len(),
            "consistent": consistent,
            "z_tolerance": Z_TOL,
        }),
    )
}

fn f2_probe_cmd(config: &ExperimentConfig, out: &Path) -> Outcome {
    let fp = &config.f2_probe;
    let body = config.body();
    let d = body.dim();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = if fp.pairs.is_empty() {
        let bbox = body.bounding_window();
        let side = (0..d).map(|a| bbox.side(a)).fold(0.0, f64::max);
        let region = bbox.inflate(0.1 * side).map_err(runtime)?;
        let stream = derive_stream(config.seed, 0, role::PAIRS).map_err(runtime)?;
        random_pairs(&region, fp.max_separation, fp.random_pairs, stream)
    } else {
        fp.pairs.iter().map(|[a, b]| (a.clone(), b.clone())).collect()
    };
    prepare_out(config, out)?;
    let spec = kernel_spec(config, fp.n_outer, fp.n_query);
    let rows = f2_probe(&body, &pairs, &spec).map_err(runtime)?;

    let mut w = csv::Writer::from_path(out.join("f2_probe.csv")).map_err(runtime)?;
    let mut header: Vec<String> = vec!["pair".into()];
    header.extend((0..d).map(|i| format!("x1_{i}")));
    header.extend((0..d).map(|i| format!("x2_{i}")));
    header.extend(["f2_hat", "stderr", "bound_43", "bound_44", "consistent"].map(String::from));
    w.write_record(&header).map_err(runtime)?;
    for (j, row) in rows.iter().enumerate() {
        let mut rec = vec![j.to_string()];
        rec.extend(row.x1.iter().chain(&row.x2).map(|v| csv_f(*v)));
        rec.push(csv_f(row.f2_hat));
        rec.push(csv_f(row.stderr));
        rec.push(csv_f(row.bound_43));
        rec.push(row.bound_44.map(csv_f).unwrap_or_default());
        rec.push(row.consistent(Z_TOL).to_string());
        w.write_record(&rec).map_err(runtime)?;
    }
    w.flush().map_err(runtime)?;

    let consistent = rows.iter().filter(|r| r.consistent(Z_TOL)).count();
    println!("{consistent} of {} pairs consistent with envelopes at {Z_TOL} stderr", rows.len());
    write_summary(
        config,
        out,
        "f2-probe",
        json!({
            "lambda": spec.lambda,
            "pairs": rows.len(),
            "consistent": consistent,
            "z_tolerance": Z_TOL,
        }),
    )
}

fn exact2d(config: &ExperimentConfig, out: &Path, dump: bool) -> Outcome {
    let body = config.body();
    if body.dim() != 2 {
        return Err(config_err(format!("dim: exact2d needs dim 2, got {}", body.dim())));
    }
    prepare_out(config, out)?;
    let mut all = Vec::new();
    let mut report = Vec::new();
    for (i, &lambda) in config.lambda.iter().enumerate() {
        let rows = oracle_comparison(&OracleConfig {
            body: body.clone(),
            lambda,
            replications: config.replications,
            scheme: config.query_scheme,
            query_factor: config.query_factor,
            epsilon: config.epsilon,
            seed: config.seed,
            stream_offset: replication_id(i, 0),
        })
        .map_err(runtime)?;
        let agree = rows.iter().filter(|r| r.z.abs() <= Z_TOL).count();
        let worst = rows.iter().map(|r| r.covering_error.abs()).fold(0.0, f64::max);
        println!(
            "lambda {lambda}: {agree} of {} within {Z_TOL} mc_stderr, max covering error {worst:.2e}",
            rows.len()
        );
        report.push(json!({
            "lambda": lambda,
            "realizations": rows.len(),
            "within_tolerance": agree,
            "fraction_within_tolerance": agree as f64 / rows.len().max(1) as f64,
            "max_covering_error": worst,
        }));
        all.extend(rows);
    }
    write_rows(&out.join("exact2d.csv"), &all)?;
    if dump {
        let lambda = config.lambda[0];
        let windows = EstimatorWindows::new(&body, lambda, config.epsilon).map_err(runtime)?;
        let stream = derive_stream(config.seed, replication_id(0, 0), role::PROCESS).map_err(runtime)?;
        let sample = sample_poisson(&windows.process, lambda, stream).map_err(runtime)?;
        let geometry = geometry_dump(&body, &sample, &windows.outer).map_err(runtime)?;
        let text = serde_json::to_string(&geometry).map_err(runtime)?;
        write(&out.join("geometry.json"), text.as_bytes())?;
    }
    write_summary(config, out, "exact2d", json!({ "per_lambda": report, "z_tolerance": Z_TOL }))
}

fn small_body(config: &ExperimentConfig, out: &Path) -> Outcome {
    let sb = &config.small_body;
    let sc = SmallBodyConfig {
        base: config.body(),
        radii: sb.radii.clone(),
        lambda: sb.lambda,
        replications: sb.replications,
        estimator: config.estimator,
        scheme: config.query_scheme,
        query_factor: config.query_factor,
        epsilon: config.epsilon,
        seed: config.seed,
    };
    prepare_out(config, out)?;
    let table = small_body_experiment(&sc).map_err(runtime)?;
    write_rows(&out.join("small_body.csv"), &table.rows)?;
    println!("{:>8} {:>12} {:>12} {:>10}", "r", "var", "v_dm1", "nonzero");
    for row in &table.rows {
        println!("{:>8} {:>12.4e} {:>12.4e} {:>10}", row.r, row.var, row.v_dm1, row.n_nonzero);
    }
    match &table.var_slope {
        Some(fit) => println!(
            "variance slope over the smallest decade {:.3} +- {:.3}; surface slope {:.3}",
            fit.slope, fit.slope_se, table.v_dm1_slope.slope
        ),
        None => println!("variance slope unavailable: fewer than two nonzero variances in the smallest decade"),
    }
    let excess = table.var_slope.map(|f| f.slope - table.v_dm1_slope.slope);
    let mut doc = to_value(&table)?;
    doc["slope_excess"] = to_value(&excess)?;
    write_summary(config, out, "small-body", doc)
}

fn first_chaos(config: &ExperimentConfig, out: &Path) -> Outcome {
    let fc = &config.first_chaos;
    let body: ConvexBody = config.body();
    prepare_out(config, out)?;
    let spec = kernel_spec(config, fc.n_outer, fc.n_query);
    let norm = first_chaos_norm(&body, fc.n_eval, &spec).map_err(runtime)?;
    println!(
        "lambda * integral f1^2 = {:.4e} +- {:.2e}; lower bound {:.3e} (applies: {})",
        norm.value, norm.stderr, norm.lower_bound, norm.lower_bound_applies
    );
    let mut doc = to_value(&norm)?;
    doc["lambda"] = spec.lambda.into();
    write_summary(config, out, "first-chaos", doc)
}

fn selftest(seed: u64) -> Outcome {
    let report = run_selftest(seed);
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}
