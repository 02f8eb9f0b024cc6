#![allow(dead_code)]

use std::path::PathBuf;

use hmdp_mpc::hmdp::{ManeuverAction, ManeuverState, Policy, TransitionTable, NUM_ACTIONS};
use hmdp_mpc::predictor::{
    lane_center, propagate_covariance, propagate_mean, step_dynamics, AgentSnapshot, Mat3, PredictionBranch,
    PredictionParams, SaContinuousState,
};
use hmdp_mpc::scenario::ScenarioConfig;

/// Row `s(p)`, column `a(q)`: next state index, 0 where the table has "/".
pub const REFERENCE_TABLE: [[&str; 9]; 9] = [
    ["s1", "s2", "s3", "/", "/", "/", "s4", "s5", "s6"],
    ["s2", "/", "s1", "/", "/", "/", "s5", "/", "s4"],
    ["s3", "s1", "/", "/", "/", "/", "s6", "s4", "/"],
    ["s4", "s5", "s6", "s1", "s2", "s3", "s7", "s8", "s9"],
    ["s5", "/", "s4", "s2", "/", "s1", "s8", "/", "s7"],
    ["s6", "s4", "/", "s3", "s1", "/", "s9", "s7", "/"],
    ["s7", "s8", "s9", "s4", "s5", "s6", "/", "/", "/"],
    ["s8", "/", "s7", "s5", "/", "s4", "/", "/", "/"],
    ["s9", "s7", "/", "s6", "s4", "/", "/", "/", "/"],
];

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn load_data(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(data_path(name)).unwrap()
}

pub fn shipped() -> Vec<ScenarioConfig> {
    ["case1", "case2", "case3"].iter().map(|n| ScenarioConfig::builtin(n).unwrap()).collect()
}

pub const FROZEN: [&str; 4] = ["frozen_follow.json", "frozen_overtake.json", "frozen_merge.json", "empty_road.json"];

/// Every policy that appears in a shipped schedule.
pub fn shipped_policies() -> Vec<(String, Policy)> {
    let mut out = Vec::new();
    for cfg in shipped() {
        for (i, sv) in cfg.svs.iter().enumerate() {
            for entry in &sv.schedule {
                out.push((format!("{}/{}@{}", cfg.name, sv.id, entry.t), cfg.policy_at(i, entry.t).clone()));
            }
        }
    }
    out
}

/// Exhaustive enumeration of all `9^H` action sequences followed by
/// feasibility and probability filtering.
pub fn brute_force_branches(
    init: &AgentSnapshot<'_>,
    table: &TransitionTable,
    params: &PredictionParams,
    horizon: usize,
    delta_seq: f64,
) -> Vec<PredictionBranch> {
    let total = NUM_ACTIONS.pow(horizon as u32);
    let mut out = Vec::new();
    'seq: for code in 0..total {
        let mut digits = vec![0; horizon];
        let mut c = code;
        for d in digits.iter_mut().rev() {
            *d = c % NUM_ACTIONS;
            c /= NUM_ACTIONS;
        }
        let actions: Vec<ManeuverAction> = digits.iter().map(|&d| ManeuverAction::ALL[d]).collect();
        let mut s = init.state;
        let mut x = init.cont;
        let mut q = init.covariance;
        let mut prob = 1.0;
        let mut branch = PredictionBranch {
            actions: actions.clone(),
            states: Vec::new(),
            means: Vec::new(),
            covariances: Vec::new(),
            probability: 0.0,
        };
        for &a in &actions {
            let p = init.policy.prob(s, a);
            let Some(next) = table.get(s, a) else { continue 'seq };
            if p <= 0.0 {
                continue 'seq;
            }
            prob *= p;
            let d = step_dynamics(a, next, &x, params);
            x = propagate_mean(&x, &d);
            q = propagate_covariance(&q, &d).unwrap();
            s = next;
            branch.states.push(next);
            branch.means.push(x);
            branch.covariances.push(q);
        }
        if prob < delta_seq {
            continue;
        }
        branch.probability = prob;
        out.push(branch);
    }
    out
}

pub fn snapshot_at(state: ManeuverState, policy: &Policy, lane_width: f64) -> AgentSnapshot<'_> {
    AgentSnapshot {
        state,
        cont: SaContinuousState::new(0.0, lane_center(state.lane, lane_width), 20.0),
        covariance: Mat3::zeros(),
        policy,
    }
}

pub fn frobenius_rel(a: &Mat3, b: &Mat3) -> f64 {
    (a - b).norm() / b.norm()
}

/// Sample covariance of the rows of `samples`.
pub fn sample_covariance(samples: &[[f64; 3]]) -> Mat3 {
    let n = samples.len() as f64;
    let mut mean = [0.0; 3];
    for s in samples {
        for i in 0..3 {
            mean[i] += s[i] / n;
        }
    }
    let mut c = Mat3::zeros();
    for s in samples {
        for i in 0..3 {
            for j in 0..3 {
                c[(i, j)] += (s[i] - mean[i]) * (s[j] - mean[j]);
            }
        }
    }
    c / (n - 1.0)
}
