//! Run summaries computed from trajectory logs, and batch runners.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scenario::{PlannerKind, ScenarioConfig};
use crate::sim::{run_with, EventKind, TrajectoryLog, EGO_ID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleMetrics {
    pub distance: f64,
    pub mean_speed: f64,
    pub final_lane: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub planner: PlannerKind,
    pub seed: u64,
    pub epsilon: f64,
    pub duration: f64,
    pub vehicles: BTreeMap<String, VehicleMetrics>,
    /// Smallest longitudinal distance between the ego vehicle and an agent
    /// sharing its lane.
    pub min_gap: Option<f64>,
    /// Ticks at which a same-lane gap is below the safe distance minus the
    /// tracking slack.
    pub safety_violations: usize,
    /// Decisions whose executed constraints were not all satisfied.
    pub margin_violations: usize,
    pub fallbacks: usize,
    /// Decisions at which the shifted previous plan was infeasible even
    /// though the previous decision was feasible.
    pub shifted_infeasible: usize,
    pub lane_changes: usize,
    /// Ego lanes in order of visit.
    pub lane_sequence: Vec<u8>,
    pub t_lc: Option<f64>,
    pub x_lc: Option<f64>,
    /// Optimal values at successive decisions (planner runs only).
    pub values: Vec<f64>,
}

/// Slack subtracted from the safe distance when judging realized gaps.
pub const TRACKING_SLACK: f64 = 0.5;

pub fn metrics(log: &TrajectoryLog) -> MetricsReport {
    let mut first: BTreeMap<String, f64> = BTreeMap::new();
    let mut last: BTreeMap<String, (f64, u8)> = BTreeMap::new();
    let mut speed_sum: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut min_gap: Option<f64> = None;
    let mut violations = 0;
    let mut lane_sequence: Vec<u8> = Vec::new();
    let mut t0 = None;
    let mut t_end = 0.0;
    let limit = log.header.d_safe - TRACKING_SLACK;

    for tick in log.ticks() {
        t0.get_or_insert(tick.t);
        t_end = tick.t;
        let ego = tick.vehicles.iter().find(|v| v.id == EGO_ID);
        for v in &tick.vehicles {
            first.entry(v.id.clone()).or_insert(v.x);
            last.insert(v.id.clone(), (v.x, v.lane));
            let e = speed_sum.entry(v.id.clone()).or_insert((0.0, 0));
            e.0 += v.v;
            e.1 += 1;
        }
        if let Some(ego) = ego {
            if lane_sequence.last() != Some(&ego.lane) {
                lane_sequence.push(ego.lane);
            }
            for v in tick.vehicles.iter().filter(|v| v.id != EGO_ID && v.lane == ego.lane) {
                let gap = (ego.x - v.x).abs();
                min_gap = Some(min_gap.map_or(gap, |g: f64| g.min(gap)));
                if gap < limit {
                    violations += 1;
                }
            }
        }
    }

    let vehicles = first
        .iter()
        .map(|(id, &x0)| {
            let (x1, lane) = last[id];
            let (sum, n) = speed_sum[id];
            (id.clone(), VehicleMetrics { distance: x1 - x0, mean_speed: sum / n as f64, final_lane: lane })
        })
        .collect();

    let decisions: Vec<_> = log.decisions().collect();
    let first_lc = decisions.iter().find(|d| d.action.lat != 0);
    let mut shifted_infeasible = 0;
    for w in decisions.windows(2) {
        if !w[0].fallback && w[1].shifted_feasible == Some(false) {
            shifted_infeasible += 1;
        }
    }
    MetricsReport {
        scenario: log.header.scenario.clone(),
        planner: log.header.planner,
        seed: log.header.seed,
        epsilon: log.header.epsilon,
        duration: t_end - t0.unwrap_or(0.0),
        vehicles,
        min_gap,
        safety_violations: violations,
        margin_violations: decisions.iter().filter(|d| d.margins.iter().any(|m| !m.satisfied)).count(),
        fallbacks: log.events().filter(|e| matches!(e.event, EventKind::Fallback { .. })).count(),
        shifted_infeasible,
        lane_changes: decisions.iter().filter(|d| d.action.lat != 0).count(),
        lane_sequence,
        t_lc: first_lc.map(|d| d.t),
        x_lc: first_lc.map(|d| d.ev.x),
        values: decisions.iter().filter_map(|d| d.cost).collect(),
    }
}

/// Worker pool capped by `HMDP_MPC_THREADS` when set.
pub fn thread_pool() -> rayon::ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("HMDP_MPC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        builder = builder.num_threads(n.max(1));
    }
    builder.build().expect("thread pool")
}

/// Runs `cfg` once per seed in parallel; results keep the seed order.
pub fn run_seeds(cfg: &ScenarioConfig, planner: PlannerKind, seeds: &[u64]) -> Result<Vec<TrajectoryLog>> {
    thread_pool().install(|| seeds.par_iter().map(|&s| run_with(cfg, planner, s, cfg.epsilon)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub epsilon: f64,
    pub t_lc: Option<f64>,
    pub x_lc: Option<f64>,
}

/// First lane change of the ego planner for each risk level, all runs with
/// the scenario seed.
pub fn sweep_epsilon(cfg: &ScenarioConfig, eps_list: &[f64]) -> Result<Vec<SweepRecord>> {
    if eps_list.is_empty() {
        return Err(crate::Error::Validation("empty risk level list".into()));
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0 && **e < 0.5)) {
        return Err(crate::Error::Validation(format!("risk level {e} is outside (0, 0.5)")));
    }
    thread_pool().install(|| {
        eps_list
            .par_iter()
            .map(|&epsilon| {
                let log = run_with(cfg, PlannerKind::HmdpMpc, cfg.rng_seed, epsilon)?;
                let m = metrics(&log);
                Ok(SweepRecord { epsilon, t_lc: m.t_lc, x_lc: m.x_lc })
            })
            .collect()
    })
}
