use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hmdp_mpc::sim::{read_csv, TrajectoryLog};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hmdp-mpc"))
}

fn exec(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn cli")
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name).display().to_string()
}

const FREE_ROAD: &str = r#"{
  "name": "free_road",
  "t_sim": 12.0, "t_l": 0.2, "t_h": 0.8, "horizon": 3,
  "lane_width": 4.0, "d_safe": 40.0, "k1": 3.0, "k2": 1.0, "a_avg": 2.0,
  "delta_seq": 1e-5,
  "cost_table": [[6, 5, 6], [2, 0, 2], [11, 9, 11]],
  "ev": { "lane": 2, "x0": 0.0, "y0": 0.0, "v0": 22.0 },
  "svs": []
}"#;

const DETERMINISTIC_SV: &str = r#"{
  "name": "one_sv",
  "t_sim": 8.0, "t_l": 0.2, "t_h": 0.8, "horizon": 3,
  "lane_width": 4.0, "d_safe": 40.0, "k1": 3.0, "k2": 1.0, "a_avg": 2.0,
  "delta_seq": 1.0,
  "cost_table": [[6, 5, 6], [2, 0, 2], [11, 9, 11]],
  "ev": { "lane": 2, "x0": 0.0, "y0": 0.0, "v0": 20.0 },
  "svs": [
    { "id": "SV1", "lane": 1, "x0": 50.0, "y0": 4.0, "v0": 18.0,
      "schedule": [ { "t": 0.0, "policy": { "rows": {} } } ] }
  ]
}"#;

fn write_scenario(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn run_writes_log_trajectory_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let out: PathBuf = tmp.path().join("out");
    let o = exec(&["run", "--scenario", "case1", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files_in(&out), ["log.ndjson", "metrics.json", "traj.csv"]);

    let summary = String::from_utf8(o.stdout).unwrap();
    for key in ["distance", "min gap", "violations", "fallbacks"] {
        assert!(summary.contains(key), "summary lacks {key}: {summary}");
    }

    let log = TrajectoryLog::read_ndjson(std::io::BufReader::new(std::fs::File::open(out.join("log.ndjson")).unwrap()))
        .unwrap();
    assert_eq!(log.header.seed, 7);
    let rows = read_csv(std::fs::File::open(out.join("traj.csv")).unwrap()).unwrap();
    assert_eq!(rows, log.csv_rows());
    let m: Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
}

#[test]
fn csv_header_is_stable() {
    let o = exec(&["run", "--scenario", "case3", "--format", "csv"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("t,id,x,y,v,lane,action"));
}

#[test]
fn missing_scenario_is_a_config_error_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o =
        exec(&["run", "--scenario", tmp.path().join("absent.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(!o.stderr.is_empty());
}

#[test]
fn malformed_scenario_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_scenario(tmp.path(), "bad.json", "{ \"t_sim\": 10.0,\n  \"t_l\": }");
    let o = exec(&["validate", "--scenario", &path]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("bad.json"), "{err}");
}

#[test]
fn invalid_planner_name_is_rejected() {
    let o = exec(&["run", "--scenario", "case1", "--planner", "greedy"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn baseline_run_on_case2() {
    let o = exec(&["run", "--scenario", "case2", "--planner", "idm-mobil", "--format", "json"]);
    assert!(o.status.success());
    let m: Value = serde_json::from_slice(&o.stdout).unwrap();
    let d = m["vehicles"]["EV"]["distance"].as_f64().unwrap();
    assert!((d - 1250.0).abs() <= 125.0, "baseline EV distance {d}");
}

#[test]
fn compare_case2_favours_the_planner() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cmp");
    let o = exec(&["compare", "--scenario", "case2", "--out", out.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let reports: Vec<Value> = serde_json::from_slice(&o.stdout).unwrap();
    let dist = |r: &Value, id: &str| r["vehicles"][id]["distance"].as_f64().unwrap();
    assert_eq!(reports[0]["planner"], "hmdp-mpc");
    assert_eq!(reports[1]["planner"], "idm-mobil");
    for id in ["EV", "SV1"] {
        assert!(dist(&reports[0], id) > dist(&reports[1], id), "{id}");
    }
    assert_eq!(reports[0]["seed"], reports[1]["seed"]);

    let merged = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    assert_eq!(merged.lines().next(), Some("planner,t,id,x,y,v,lane,action"));
    assert!(merged.lines().any(|l| l.starts_with("hmdp-mpc,")));
    assert!(merged.lines().any(|l| l.starts_with("idm-mobil,")));
    assert!(out.join("metrics_hmdp-mpc.json").exists());
    assert!(out.join("metrics_idm-mobil.json").exists());
}

#[test]
fn compare_without_agents_gives_matching_free_flow() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_scenario(tmp.path(), "free.json", FREE_ROAD);
    let o = exec(&["compare", "--scenario", &path, "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let reports: Vec<Value> = serde_json::from_slice(&o.stdout).unwrap();
    let d: Vec<f64> = reports.iter().map(|r| r["vehicles"]["EV"]["distance"].as_f64().unwrap()).collect();
    assert!((d[0] - d[1]).abs() < 1.0, "{d:?}");
    assert!((d[0] - 22.0 * 12.0).abs() < 1.0, "{d:?}");
    for r in &reports {
        assert_eq!(r["lane_changes"], 0);
        assert_eq!(r["safety_violations"], 0);
    }
}

#[test]
fn compare_with_different_seeds_is_rejected() {
    let o = exec(&["compare", "--scenario", "case2", "--seed", "1", "--baseline-seed", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let same = exec(&["compare", "--scenario", "case3", "--seed", "2", "--baseline-seed", "2"]);
    assert!(same.status.success());
}

#[test]
fn sweep_emits_one_record_per_risk_level() {
    let o = exec(&["sweep", "--scenario", "case3", "--epsilon-list", "0.01,0.2", "--format", "csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epsilon,t_lc,x_lc");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.01,"));

    let bad = exec(&["sweep", "--scenario", "case3", "--epsilon-list", "0.7"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn predict_unknown_agent_exits_2() {
    let o = exec(&["predict", "--scenario", "case2", "--agent", "SV7"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn predict_deterministic_policy_has_one_branch() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_scenario(tmp.path(), "one.json", DETERMINISTIC_SV);
    let o = exec(&["predict", "--scenario", &path, "--agent", "SV1", "--horizon", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let branches = doc["branches"].as_array().unwrap();
    assert_eq!(branches.len(), 1);
    assert_eq!(branches[0]["probability"], 1.0);
    let steps = branches[0]["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 3);
    let x: Vec<f64> = steps.iter().map(|s| s["mean"]["x"].as_f64().unwrap()).collect();
    for (k, xk) in x.iter().enumerate() {
        assert!((xk - (50.0 + 18.0 * 0.8 * (k + 1) as f64)).abs() < 1e-9);
    }
    for s in steps {
        assert!(s["ellipse"]["semi_major"].as_f64().unwrap() >= s["ellipse"]["semi_minor"].as_f64().unwrap());
        assert_eq!(s["covariance"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn predict_prunes_unlikely_branches() {
    let all = exec(&["predict", "--scenario", "case2", "--agent", "SV1", "--horizon", "2", "--delta-seq", "0"]);
    let pruned = exec(&["predict", "--scenario", "case2", "--agent", "SV1", "--horizon", "2", "--delta-seq", "0.01"]);
    let count = |o: &Output| {
        let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
        let b = doc["branches"].as_array().unwrap().clone();
        b.iter().map(|x| x["probability"].as_f64().unwrap()).collect::<Vec<_>>()
    };
    let (a, p) = (count(&all), count(&pruned));
    assert!(p.len() < a.len());
    assert!(p.iter().all(|&q| q >= 0.01));
    assert_eq!(a.iter().filter(|&&q| q >= 0.01).count(), p.len());
    assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn predict_csv_columns() {
    let o = exec(&["predict", "--scenario", "case1", "--agent", "SV2", "--format", "csv"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("branch,probability,step,state,action,x,y,vx,q_xx,q_xy,q_xv,q_yy,q_yv,q_vv,semi_major,semi_minor,angle")
    );
}

#[test]
fn validate_echoes_defaults_with_provenance() {
    let o = exec(&["validate", "--scenario", &data("empty_road.json")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(cfg["provenance"].as_object().is_some_and(|p| p.contains_key("vehicle")));
    assert_eq!(cfg["d_safe"], 40.0);
}

#[test]
fn same_seed_gives_identical_logs() {
    let a = exec(&["run", "--scenario", "case2", "--seed", "5", "--format", "ndjson"]);
    let b = exec(&["run", "--scenario", "case2", "--seed", "5", "--format", "ndjson"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = exec(&["run", "--scenario", "case2", "--seed", "6", "--format", "ndjson"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn modal_truth_makes_agents_take_their_likeliest_maneuver() {
    let o = exec(&["run", "--scenario", "case2", "--modal-truth", "--seed", "3", "--format", "csv"]);
    assert!(o.status.success());
    let rows = read_csv(o.stdout.as_slice()).unwrap();
    let sv2: Vec<String> = rows.iter().filter(|r| r.id == "SV2").map(|r| r.action.to_string()).collect();
    assert!(!sv2.is_empty());
    assert!(sv2.iter().all(|a| a == "a1"));
    let stochastic = exec(&["run", "--scenario", "case2", "--seed", "3", "--format", "csv"]);
    let rows = read_csv(stochastic.stdout.as_slice()).unwrap();
    assert!(rows.iter().any(|r| r.id == "SV2" && r.action.to_string() != "a1"));
}
