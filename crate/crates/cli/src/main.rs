//! Command-line front end for the maneuver planner simulations.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hmdp_mpc::metrics::{metrics, sweep_epsilon, MetricsReport, SweepRecord};
use hmdp_mpc::predictor::{two_sigma_ellipse, ReachabilitySet};
use hmdp_mpc::scenario::{PlannerKind, ScenarioConfig};
use hmdp_mpc::sim::{run_with, TrajectoryLog, EGO_ID};
use hmdp_mpc::Error;
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "hmdp-mpc", version, about = "Risk-aware highway maneuver planning simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario with one planner.
    Run(RunArgs),
    /// Simulate both planners on the same scenario and seed.
    Compare(CompareArgs),
    /// First lane change of the ego planner over a list of risk levels.
    Sweep(SweepArgs),
    /// Reachability set of one surrounding agent from its initial state.
    Predict(PredictArgs),
    /// Parse a scenario and print it with every default filled in.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file, or one of the built-in names case1, case2, case3.
    #[arg(long)]
    scenario: String,
    /// Random seed; defaults to the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Agents always take their most likely maneuver.
    #[arg(long)]
    modal_truth: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// hmdp-mpc or idm-mobil; defaults to the scenario's planner.
    #[arg(long, value_parser = parse_planner)]
    planner: Option<PlannerKind>,
    /// Directory for log.ndjson, traj.csv and metrics.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print this data on stdout instead of the summary.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Must equal the seed when given; both planners see the same traffic.
    #[arg(long)]
    baseline_seed: Option<u64>,
    /// Directory for compare.csv and the metrics files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print this data on stdout instead of the table.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated risk levels; defaults to the scenario's list.
    #[arg(long, value_delimiter = ',')]
    epsilon_list: Option<Vec<f64>>,
    /// Directory for sweep.csv and sweep.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print this data on stdout instead of the table.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct PredictArgs {
    /// Scenario file or built-in name.
    #[arg(long)]
    scenario: String,
    /// Id of the surrounding agent.
    #[arg(long)]
    agent: String,
    /// Defaults to the scenario's planning horizon.
    #[arg(long)]
    horizon: Option<usize>,
    /// Overrides the branch pruning threshold.
    #[arg(long)]
    delta_seq: Option<f64>,
    /// Directory for predict.json, predict.ndjson or predict.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario file or built-in name.
    #[arg(long)]
    scenario: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Ndjson,
    Csv,
    Json,
}

fn parse_planner(s: &str) -> Result<PlannerKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::Validation(_) | Error::UnknownAgent(_) | Error::InvalidCostTable(_) => 2,
            Error::InvalidTable(_) | Error::InvalidPolicy { .. } => 2,
            _ => 3,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: 3, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Sweep(a) => sweep(a),
        Command::Predict(a) => predict(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Any load failure, missing files included, is a configuration error.
fn load(spec: &str) -> CliResult<ScenarioConfig> {
    ScenarioConfig::load_or_builtin(spec).map_err(|e| Failure::config(e.to_string()))
}

fn load_scenario(args: &ScenarioArgs) -> CliResult<(ScenarioConfig, u64)> {
    let mut cfg = load(&args.scenario)?;
    if args.modal_truth {
        cfg.modal_truth = true;
    }
    let seed = args.seed.unwrap_or(cfg.rng_seed);
    Ok((cfg, seed))
}

/// Writes every file or none: the directory is only touched once all
/// contents are ready.
fn write_outputs(dir: &Path, files: &[(&str, Vec<u8>)]) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn stdout_bytes(bytes: &[u8]) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)?;
    out.flush()?;
    Ok(())
}

fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(Error::from)?;
    v.push(b'\n');
    Ok(v)
}

fn csv_bytes(log: &TrajectoryLog) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    log.write_csv(&mut buf)?;
    Ok(buf)
}

fn summary(m: &MetricsReport) -> String {
    let mut s = String::new();
    let _ =
        writeln!(s, "scenario   {}  planner {}  seed {}  epsilon {}", m.scenario, m.planner.name(), m.seed, m.epsilon);
    let _ = writeln!(s, "duration   {:.2} s", m.duration);
    for (id, v) in &m.vehicles {
        let _ = writeln!(
            s,
            "{id:<10} distance {:9.1} m  mean speed {:5.2} m/s  final lane {}",
            v.distance, v.mean_speed, v.final_lane
        );
    }
    let gap = m.min_gap.map_or("-".to_string(), |g| format!("{g:.1} m"));
    let _ = writeln!(s, "min gap    {gap}");
    let _ = writeln!(s, "violations {}", m.safety_violations);
    let _ = writeln!(s, "fallbacks  {}", m.fallbacks);
    let lanes: Vec<String> = m.lane_sequence.iter().map(u8::to_string).collect();
    let _ = writeln!(s, "ego lanes  {}", lanes.join(" -> "));
    s
}

fn run(args: RunArgs) -> CliResult<()> {
    let (cfg, seed) = load_scenario(&args.scenario)?;
    let planner = args.planner.unwrap_or(cfg.planner);
    let log = run_with(&cfg, planner, seed, cfg.epsilon)?;
    let report = metrics(&log);
    let ndjson = log.to_ndjson();
    let csv = csv_bytes(&log)?;
    let metrics_json = json_bytes(&report)?;
    if let Some(dir) = &args.out {
        write_outputs(
            dir,
            &[("log.ndjson", ndjson.clone()), ("traj.csv", csv.clone()), ("metrics.json", metrics_json.clone())],
        )?;
    }
    match args.format {
        None => stdout_bytes(summary(&report).as_bytes()),
        Some(f) => {
            eprint!("{}", summary(&report));
            stdout_bytes(match f {
                Format::Ndjson => &ndjson,
                Format::Csv => &csv,
                Format::Json => &metrics_json,
            })
        }
    }
}

#[derive(Serialize)]
struct CompareRow<'a> {
    planner: &'a str,
    t: f64,
    id: &'a str,
    x: f64,
    y: f64,
    v: f64,
    lane: u8,
    action: String,
}

fn compare_table(a: &MetricsReport, b: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {}  seed {}", a.scenario, a.seed);
    let _ = writeln!(s, "{:<24}{:>14}{:>14}", "metric", a.planner.name(), b.planner.name());
    let mut row = |name: String, x: String, y: String| {
        let _ = writeln!(s, "{name:<24}{x:>14}{y:>14}");
    };
    let ids: Vec<&String> = a.vehicles.keys().collect();
    for id in ids {
        let d = |m: &MetricsReport| m.vehicles.get(id).map_or("-".into(), |v| format!("{:.1}", v.distance));
        row(format!("{id} distance [m]"), d(a), d(b));
    }
    let speed = |m: &MetricsReport| m.vehicles.get(EGO_ID).map_or("-".into(), |v| format!("{:.2}", v.mean_speed));
    row("EV mean speed [m/s]".into(), speed(a), speed(b));
    let gap = |m: &MetricsReport| m.min_gap.map_or("-".into(), |g| format!("{g:.1}"));
    row("min gap [m]".into(), gap(a), gap(b));
    row("violations".into(), a.safety_violations.to_string(), b.safety_violations.to_string());
    row("fallbacks".into(), a.fallbacks.to_string(), b.fallbacks.to_string());
    row("lane changes".into(), a.lane_changes.to_string(), b.lane_changes.to_string());
    s
}

fn compare(args: CompareArgs) -> CliResult<()> {
    let (cfg, seed) = load_scenario(&args.scenario)?;
    if let Some(b) = args.baseline_seed {
        if b != seed {
            return Err(Failure::config(format!(
                "baseline seed {b} differs from seed {seed}; planners must be compared on the same traffic"
            )));
        }
    }
    let planners = [PlannerKind::HmdpMpc, PlannerKind::IdmMobil];
    let mut logs = Vec::new();
    for p in planners {
        logs.push(run_with(&cfg, p, seed, cfg.epsilon)?);
    }
    let reports: Vec<MetricsReport> = logs.iter().map(metrics).collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    for (p, log) in planners.iter().zip(&logs) {
        for r in log.csv_rows() {
            w.serialize(CompareRow {
                planner: p.name(),
                t: r.t,
                id: &r.id,
                x: r.x,
                y: r.y,
                v: r.v,
                lane: r.lane,
                action: r.action.to_string(),
            })
            .map_err(Error::from)?;
        }
    }
    let merged = w.into_inner().map_err(|e| Failure { code: 3, message: e.to_string() })?;
    let reports_json = json_bytes(&reports)?;
    let table = compare_table(&reports[0], &reports[1]);

    if let Some(dir) = &args.out {
        let mut files = vec![("compare.csv", merged.clone()), ("metrics.json", reports_json.clone())];
        let a = json_bytes(&reports[0])?;
        let b = json_bytes(&reports[1])?;
        files.push(("metrics_hmdp-mpc.json", a));
        files.push(("metrics_idm-mobil.json", b));
        write_outputs(dir, &files)?;
    }
    match args.format {
        None => stdout_bytes(table.as_bytes()),
        Some(f) => {
            eprint!("{table}");
            let bytes = match f {
                Format::Csv => merged,
                Format::Json => reports_json,
                Format::Ndjson => ndjson_lines(&reports)?,
            };
            stdout_bytes(&bytes)
        }
    }
}

fn ndjson_lines<T: Serialize>(items: &[T]) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(Error::from)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

fn sweep_csv(records: &[SweepRecord]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(Error::from)?;
    }
    w.into_inner().map_err(|e| Failure { code: 3, message: e.to_string() })
}

fn sweep(args: SweepArgs) -> CliResult<()> {
    let (mut cfg, seed) = load_scenario(&args.scenario)?;
    cfg.rng_seed = seed;
    let list = args.epsilon_list.unwrap_or_else(|| cfg.epsilon_list.clone());
    if list.is_empty() || list.iter().any(|e| !(*e > 0.0 && *e < 0.5)) {
        return Err(Failure::config("risk levels must lie in (0, 0.5)"));
    }
    let records = sweep_epsilon(&cfg, &list)?;
    let csv = sweep_csv(&records)?;
    let json = json_bytes(&records)?;
    if let Some(dir) = &args.out {
        write_outputs(dir, &[("sweep.csv", csv.clone()), ("sweep.json", json.clone())])?;
    }
    match args.format {
        None => {
            let mut s = format!("{:>8}{:>10}{:>10}\n", "epsilon", "t_lc [s]", "x_lc [m]");
            for r in &records {
                let t = r.t_lc.map_or("-".into(), |v| format!("{v:.2}"));
                let x = r.x_lc.map_or("-".into(), |v| format!("{v:.1}"));
                let _ = writeln!(s, "{:>8}{t:>10}{x:>10}", r.epsilon);
            }
            stdout_bytes(s.as_bytes())
        }
        Some(Format::Csv) => stdout_bytes(&csv),
        Some(Format::Json) => stdout_bytes(&json),
        Some(Format::Ndjson) => stdout_bytes(&ndjson_lines(&records)?),
    }
}

/// Plot-ready form of one branch.
fn branch_json(index: usize, b: &hmdp_mpc::predictor::PredictionBranch) -> serde_json::Value {
    let steps: Vec<_> = (0..b.means.len())
        .map(|j| {
            let m = &b.means[j];
            let q = &b.covariances[j];
            let e = two_sigma_ellipse(q);
            let rows: Vec<[f64; 3]> = (0..3).map(|r| [q[(r, 0)], q[(r, 1)], q[(r, 2)]]).collect();
            json!({
                "step": j + 1,
                "state": b.states[j].to_string(),
                "action": b.actions[j].to_string(),
                "mean": { "x": m.x, "y": m.y, "vx": m.vx },
                "covariance": rows,
                "ellipse": { "center": [m.x, m.y], "semi_major": e.semi_major, "semi_minor": e.semi_minor, "angle": e.angle },
            })
        })
        .collect();
    json!({
        "branch": index,
        "probability": b.probability,
        "actions": b.actions.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "steps": steps,
    })
}

#[derive(Serialize)]
struct PredictRow {
    branch: usize,
    probability: f64,
    step: usize,
    state: String,
    action: String,
    x: f64,
    y: f64,
    vx: f64,
    q_xx: f64,
    q_xy: f64,
    q_xv: f64,
    q_yy: f64,
    q_yv: f64,
    q_vv: f64,
    semi_major: f64,
    semi_minor: f64,
    angle: f64,
}

fn predict_csv(reach: &ReachabilitySet) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, b) in reach.branches.iter().enumerate() {
        for j in 0..b.means.len() {
            let (m, q) = (&b.means[j], &b.covariances[j]);
            let e = two_sigma_ellipse(q);
            w.serialize(PredictRow {
                branch: i,
                probability: b.probability,
                step: j + 1,
                state: b.states[j].to_string(),
                action: b.actions[j].to_string(),
                x: m.x,
                y: m.y,
                vx: m.vx,
                q_xx: q[(0, 0)],
                q_xy: q[(0, 1)],
                q_xv: q[(0, 2)],
                q_yy: q[(1, 1)],
                q_yv: q[(1, 2)],
                q_vv: q[(2, 2)],
                semi_major: e.semi_major,
                semi_minor: e.semi_minor,
                angle: e.angle,
            })
            .map_err(Error::from)?;
        }
    }
    w.into_inner().map_err(|e| Failure { code: 3, message: e.to_string() })
}

fn predict(args: PredictArgs) -> CliResult<()> {
    let mut cfg = load(&args.scenario)?;
    if let Some(d) = args.delta_seq {
        if !(0.0..=1.0).contains(&d) {
            return Err(Failure::config(format!("delta_seq {d} is outside [0, 1]")));
        }
        cfg.delta_seq = d;
    }
    let horizon = args.horizon.unwrap_or(cfg.horizon);
    if horizon == 0 {
        return Err(Failure::config("horizon must be at least 1"));
    }
    let reach = cfg.predict_agent(&args.agent, horizon)?;
    let branches: Vec<_> = reach.branches.iter().enumerate().map(|(i, b)| branch_json(i, b)).collect();
    let doc = json!({
        "agent": reach.agent_id,
        "horizon": horizon,
        "delta_seq": cfg.delta_seq,
        "branches": branches,
    });
    let bytes = match args.format {
        Format::Json => json_bytes(&doc)?,
        Format::Ndjson => ndjson_lines(&branches)?,
        Format::Csv => predict_csv(&reach)?,
    };
    if let Some(dir) = &args.out {
        let name = match args.format {
            Format::Json => "predict.json",
            Format::Ndjson => "predict.ndjson",
            Format::Csv => "predict.csv",
        };
        write_outputs(dir, &[(name, bytes.clone())])?;
    }
    stdout_bytes(&bytes)
}

fn validate(args: ValidateArgs) -> CliResult<()> {
    let cfg = load(&args.scenario)?;
    stdout_bytes(&json_bytes(&cfg)?)
}
