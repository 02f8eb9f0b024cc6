//! Independent oracles for derived values.

mod common;

use std::collections::BTreeMap;

use hmdp_mpc::baseline::{idm_accel, IdmParams};
use hmdp_mpc::chance::{inverse_normal_cdf, reformulate, safety_constraints, AffineConstraint};
use hmdp_mpc::hmdp::{ManeuverAction, ManeuverState, Policy, TransitionTable};
use hmdp_mpc::planner::{baseline_policy, solve, solve_brute_force, stage_cost, terminal_cost, CostTable, EvState};
use hmdp_mpc::predictor::{
    enumerate_branches, lane_center, propagate_covariance, Mat3, PredictionBranch, ReachabilitySet, SaContinuousState,
    Vec3,
};
use hmdp_mpc::scenario::ScenarioConfig;
use hmdp_mpc::Error;

use common::*;

fn st(lane: u8, long: i8) -> ManeuverState {
    ManeuverState::new(lane, long).unwrap()
}

fn act(i: usize) -> ManeuverAction {
    ManeuverAction::ALL[i - 1]
}

/// Standard normal CDF by composite Simpson integration of the density.
fn simpson_cdf(x: f64) -> f64 {
    let n = 20_000;
    let (a, b) = (0.0, x);
    let h = (b - a) / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(a) + pdf(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(a + i as f64 * h);
    }
    0.5 + s * h / 3.0
}

fn bisect_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if simpson_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn quantile_matches_integrated_density() {
    assert!((bisect_quantile(0.975) - 1.959964).abs() < 1e-6);
    assert!((bisect_quantile(0.95) - 1.644854).abs() < 1e-6);
    for p in [0.01, 0.05, 0.2, 0.5, 0.7, 0.9, 0.95, 0.975, 0.99, 0.999] {
        let q = inverse_normal_cdf(p).unwrap();
        assert!((q - bisect_quantile(p)).abs() < 1e-8, "p {p}: {q}");
    }
}

#[test]
fn tightening_with_diagonal_covariance() {
    let ac =
        AffineConstraint { c_ea: Vec3::new(1.0, 0.0, 0.0), c_sa: Vec3::new(-1.0, 0.0, 0.0), c: 0.0, epsilon: 0.05 };
    let q = Mat3::from_diagonal(&Vec3::new(0.9, 0.9, 0.0));
    let m = reformulate(&ac, &Vec3::zeros(), &Vec3::zeros(), &q).unwrap();
    assert!((m.required - bisect_quantile(0.95) * 0.9f64.sqrt()).abs() < 1e-6);
    assert!((m.required - 1.560446).abs() < 1e-5);
}

fn single_step_set(mu: f64) -> ReachabilitySet {
    ReachabilitySet {
        agent_id: "SV".into(),
        branches: vec![PredictionBranch {
            actions: vec![act(1)],
            states: vec![st(2, 0)],
            means: vec![SaContinuousState::new(100.0 - mu, 0.0, 20.0)],
            covariances: vec![Mat3::from_diagonal(&Vec3::new(0.9, 0.9, 0.0))],
            probability: 1.0,
        }],
    }
}

#[test]
fn gap_margins_against_hand_arithmetic() {
    let ego = [(st(2, 0), Vec3::new(100.0, 0.0, 20.0))];
    let required = 40.0 + bisect_quantile(0.95) * 0.9f64.sqrt();
    let ok = safety_constraints(&ego, &[single_step_set(50.0)], 40.0, 0.05).unwrap();
    assert!(
        ok[0].satisfied && (ok[0].lhs + 40.0 - 50.0).abs() < 1e-9 && (ok[0].required + 40.0 - required).abs() < 1e-6
    );
    let bad = safety_constraints(&ego, &[single_step_set(41.0)], 40.0, 0.05).unwrap();
    assert!(!bad[0].satisfied);
    let elsewhere = [(st(1, 0), Vec3::new(100.0, 4.0, 20.0))];
    assert!(safety_constraints(&elsewhere, &[single_step_set(41.0)], 40.0, 0.05).unwrap().is_empty());
}

#[test]
fn covariance_against_explicit_products() {
    let params = hmdp_mpc::predictor::PredictionParams::new(1.0, 3.0, 1.0, 2.0, 4.0, Mat3::zeros());
    let d = hmdp_mpc::predictor::mode_dynamics(0, 0, 0.0, 0.0, &params);
    let q = propagate_covariance(&Mat3::identity(), &d).unwrap();
    assert_eq!(q, Mat3::new(2.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0));

    let mut ident = d;
    ident.a = Mat3::identity();
    ident.xi = Mat3::from_diagonal(&Vec3::new(0.9, 0.9, 0.0));
    let q0 = Mat3::new(2.0, 0.3, 0.1, 0.3, 1.0, 0.0, 0.1, 0.0, 0.5);
    assert!((propagate_covariance(&q0, &ident).unwrap() - (q0 + ident.xi)).norm() < 1e-12);
}

#[test]
fn pruned_tree_against_all_four_sequences() {
    // every state offers hold (a1, 0.9) and a move (a2, 0.1)
    let mut table = TransitionTable::empty();
    for s in ManeuverState::ALL {
        table.set(s, act(1), Some(s));
        table.set(s, act(2), Some(s));
    }
    let rows: BTreeMap<String, Vec<f64>> =
        ManeuverState::ALL.iter().map(|s| (s.to_string(), vec![0.9, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])).collect();
    let policy = Policy::from_row_map(&rows, &table).unwrap();
    let params = hmdp_mpc::predictor::PredictionParams::new(0.8, 3.0, 1.0, 2.0, 4.0, Mat3::zeros());
    let init = snapshot_at(st(2, 0), &policy, 4.0);
    let reach = enumerate_branches("sv", &init, &table, &params, 2, 0.05).unwrap();
    let probs: Vec<f64> = reach.branches.iter().map(|b| b.probability).collect();
    assert_eq!(probs.len(), 3);
    for (p, want) in probs.iter().zip([0.81, 0.09, 0.09]) {
        assert!((p - want).abs() < 1e-12);
    }
    assert!(!reach.branches.iter().any(|b| b.actions == [act(2), act(2)]));
    assert_eq!(reach.branches, brute_force_branches(&init, &table, &params, 2, 0.05));
}

#[test]
fn dominant_cruise_keeps_only_the_cruise_branch() {
    let cfg = ScenarioConfig::builtin("case3").unwrap();
    for sv in &cfg.svs {
        let reach = cfg.predict_agent(&sv.id, 3).unwrap();
        assert_eq!(reach.branches.len(), 1);
        assert_eq!(reach.branches[0].actions, vec![act(1); 3]);
        assert!((reach.branches[0].probability - 0.512).abs() < 1e-12);
    }
}

#[test]
fn unknown_agent_is_reported() {
    let cfg = ScenarioConfig::builtin("case2").unwrap();
    assert!(matches!(cfg.predict_agent("SV9", 3), Err(Error::UnknownAgent(_))));
}

fn idm_reference(v: f64, gap: f64, dv: f64) -> f64 {
    let (v0, t, a, b, s0, delta): (f64, f64, f64, f64, f64, f64) = (30.0, 1.5, 2.0, 3.0, 2.0, 4.0);
    let s_star = s0 + v * t + v * dv / (2.0 * (a * b).sqrt());
    a * (1.0 - (v / v0).powf(delta) - (s_star / gap).powi(2))
}

#[test]
fn idm_against_scalar_formula() {
    let p = IdmParams::default();
    let got = idm_accel(25.0, 50.0, 0.0, &p);
    assert!((got - idm_reference(25.0, 50.0, 0.0)).abs() < 1e-12);
    // hand evaluation: s* = 39.5, 1 - (5/6)^4 - (39.5/50)^2 = -0.106...
    assert!((got - 2.0 * (1.0 - (25.0f64 / 30.0).powi(4) - 0.79f64.powi(2))).abs() < 1e-12);
    for (v, gap, dv) in [(10.0, 80.0, -2.0), (20.0, 60.0, 1.0), (28.0, 120.0, 0.5)] {
        assert!((idm_accel(v, gap, dv, &p) - idm_reference(v, gap, dv)).abs() < 1e-12);
    }
    assert_eq!(idm_accel(30.0, f64::INFINITY, 0.0, &p), 0.0);
    assert_eq!(idm_accel(0.0, f64::INFINITY, 0.0, &p), p.a);
}

#[test]
fn terminal_cost_equals_baseline_rollout() {
    let ct = CostTable::reference();
    let t = TransitionTable::three_lane();
    for s in ManeuverState::ALL {
        let a = baseline_policy(s);
        let next = t.get(s, a).unwrap();
        let rollout = if s.is_goal() { 0.0 } else { stage_cost(&[a], &[next], &ct) };
        assert_eq!(terminal_cost(s, &ct, &t), rollout, "{s}");
        assert!(next.is_goal());
    }
    assert_eq!(baseline_policy(st(2, 1)), act(3));
    assert_eq!(baseline_policy(st(2, -1)), act(2));
}

/// Ego states around each shipped scenario's initial traffic.
fn solver_instances(cfg: &ScenarioConfig) -> Vec<(EvState, Vec<ReachabilitySet>)> {
    let reach: Vec<ReachabilitySet> =
        cfg.svs.iter().map(|sv| cfg.predict_agent(&sv.id, cfg.horizon).unwrap()).collect();
    let mut out = Vec::new();
    for lane in 1..=3 {
        for long in -1..=1 {
            for dx in [-60.0, -30.0, -10.0, 0.0, 10.0, 30.0, 60.0] {
                let v = cfg.ev.v0.clamp(cfg.ev.v_min + 2.0, cfg.ev_params().v_max - 2.0);
                let s = EvState::new(cfg.ev.x0 + dx, lane_center(lane, cfg.lane_width), v, st(lane, long));
                out.push((s, reach.clone()));
            }
        }
    }
    out
}

#[test]
fn search_matches_brute_force() {
    for cfg in shipped() {
        let table = cfg.ev_table();
        let p = cfg.ev_params();
        for (s0, reach) in solver_instances(&cfg) {
            let fast = solve(&s0, &reach, &cfg.cost_table, &table, &p);
            let slow = solve_brute_force(&s0, &reach, &cfg.cost_table, &table, &p);
            match (fast, slow) {
                (Ok(a), Ok(b)) => {
                    assert_eq!(a.actions, b.actions, "{} {:?}", cfg.name, s0);
                    assert_eq!(a.value(), b.value());
                    assert_eq!(a.feasible_count, b.feasible_count);
                }
                (Err(Error::NoFeasibleSequence { .. }), Err(Error::NoFeasibleSequence { .. })) => {}
                (a, b) => panic!("{}: {:?} vs {:?}", cfg.name, a.map(|s| s.actions), b.map(|s| s.actions)),
            }
        }
    }
}

#[test]
fn scaling_costs_keeps_the_argmin() {
    for cfg in shipped() {
        let table = cfg.ev_table();
        let p = cfg.ev_params();
        for k in [0.5, 3.0, 100.0] {
            let scaled = cfg.cost_table.scaled(k).unwrap();
            for (s0, reach) in solver_instances(&cfg) {
                let (Ok(a), Ok(b)) =
                    (solve(&s0, &reach, &cfg.cost_table, &table, &p), solve(&s0, &reach, &scaled, &table, &p))
                else {
                    continue;
                };
                assert_eq!(a.actions, b.actions);
                assert!((b.value() - k * a.value()).abs() < 1e-9 * (1.0 + b.value()));
            }
        }
    }
}

#[test]
fn shifted_plan_is_feasible_in_frozen_traffic() {
    // constraints already bind at the first decision and traffic does not change
    let cfg = load_data("frozen_follow.json");
    let log = hmdp_mpc::sim::run(&cfg).unwrap();
    let decisions: Vec<_> = log.decisions().collect();
    assert!(decisions[0].margins.iter().any(|m| m.slack() < 10.0));
    assert!(decisions.iter().skip(1).all(|d| d.shifted_feasible == Some(true)));
}

#[test]
fn shipped_parameters_load() {
    let c1 = ScenarioConfig::builtin("case1").unwrap();
    assert_eq!((c1.t_sim, c1.t_l, c1.t_h, c1.horizon), (50.0, 0.2, 0.8, 3));
    assert_eq!((c1.d_safe, c1.delta_seq), (40.0, 1e-5));
    assert_eq!(<[[f64; 3]; 3]>::from(c1.cost_table), [[6.0, 5.0, 6.0], [2.0, 0.0, 2.0], [11.0, 9.0, 11.0]]);
    let c3 = ScenarioConfig::builtin("case3").unwrap();
    assert_eq!((c3.t_sim, c3.t_l, c3.t_h, c3.d_safe, c3.delta_seq), (5.0, 0.02, 0.08, 6.0, 0.2));
    let xi = c3.xi.matrix();
    assert_eq!((xi[(0, 0)], xi[(1, 1)]), (0.9, 0.9));
    let c2 = ScenarioConfig::builtin("case2").unwrap();
    assert_eq!((c2.t_sim, c2.d_safe), (45.0, 75.0));
}
