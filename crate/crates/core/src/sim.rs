//! Two-timescale closed-loop simulation.
//!
//! Every decision period the surrounding agents' reachability sets are
//! rebuilt from their realized states, the ego planner (or the rule-based
//! driver) commits one action, and each agent samples its true maneuver.
//! Between decisions the ego vehicle tracks its reference on the bicycle
//! model and the agents move along their sampled noisy transitions.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{accel_behind, idm_accel, mobil_decide, LaneDecision, LaneVehicle};
use crate::chance::ConstraintMargin;
use crate::error::{Error, Result};
use crate::hmdp::{ManeuverAction, ManeuverState, Policy};
use crate::planner::{baseline_policy, ev_predict, evaluate_sequence, quintic, solve, EvState, MpcSolution};
use crate::plant::{bicycle_step, track, BicycleState, GaussianNoise, TrackingGains, TrackingReference};
use crate::predictor::{
    enumerate_branches, lane_center, step_dynamics, AgentSnapshot, Mat3, ReachabilitySet, SaContinuousState,
};
use crate::scenario::{PlannerKind, ScenarioConfig};

pub const EGO_ID: &str = "EV";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub scenario: String,
    pub planner: PlannerKind,
    pub seed: u64,
    pub epsilon: f64,
    pub t_l: f64,
    pub t_h: f64,
    pub d_safe: f64,
    pub lane_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    /// Discrete (target) lane.
    pub lane: u8,
    pub action: ManeuverAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub vehicles: Vec<VehicleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: f64,
    pub ev: EvState,
    pub action: ManeuverAction,
    pub next: ManeuverState,
    pub plan: Vec<ManeuverAction>,
    pub cost: Option<f64>,
    pub feasible_count: usize,
    pub candidate_count: usize,
    pub active_branches: usize,
    pub fallback: bool,
    /// Whether last period's shifted plan completed by the baseline action
    /// is feasible now. Absent when the last decision had no plan.
    pub shifted_feasible: Option<bool>,
    pub margins: Vec<ConstraintMargin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    LaneChangeStart { from: u8, to: u8, x: f64 },
    LaneChangeEnd { lane: u8, x: f64 },
    Fallback { candidates: usize },
    SafetyViolation { id: String, gap: f64 },
    MinGap { id: String, gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    #[serde(flatten)]
    pub event: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header(RunHeader),
    Tick(TickRecord),
    Decision(Box<DecisionRecord>),
    Event(EventRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub header: RunHeader,
    pub records: Vec<LogRecord>,
}

impl TrajectoryLog {
    pub fn ticks(&self) -> impl Iterator<Item = &TickRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Tick(t) => Some(t),
            _ => None,
        })
    }

    pub fn decisions(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Decision(d) => Some(d.as_ref()),
            _ => None,
        })
    }

    pub fn events(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Event(e) => Some(e),
            _ => None,
        })
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &LogRecord::Header(self.header.clone()))?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_ndjson(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_ndjson(&mut out).expect("writing to memory");
        out
    }

    pub fn read_ndjson<R: BufRead>(r: R) -> Result<Self> {
        let mut header = None;
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                source_name: "log".into(),
                line: i + 1,
                column: e.column(),
                message: e.to_string(),
            })?;
            match rec {
                LogRecord::Header(h) => header = Some(h),
                other => records.push(other),
            }
        }
        let header = header.ok_or_else(|| Error::Validation("log has no header record".into()))?;
        Ok(Self { header, records })
    }

    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.ticks()
            .flat_map(|t| {
                t.vehicles.iter().map(move |v| CsvRow {
                    t: t.t,
                    id: v.id.clone(),
                    x: v.x,
                    y: v.y,
                    v: v.v,
                    lane: v.lane,
                    action: v.action,
                })
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in self.csv_rows() {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One row of the plotting export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t: f64,
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub lane: u8,
    pub action: ManeuverAction,
}

pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<CsvRow>> {
    csv::Reader::from_reader(r).deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone)]
struct SvAgent {
    id: String,
    state: ManeuverState,
    cont: SaContinuousState,
    from: SaContinuousState,
    to: SaContinuousState,
    action: ManeuverAction,
    speed_limit: Option<f64>,
}

/// Lateral bookkeeping of the ego lane change in progress.
#[derive(Debug, Clone, Copy)]
struct LaneChange {
    origin_center: f64,
    direction: i8,
    tau0: f64,
}

/// Reference over one decision period.
#[derive(Debug, Clone, Copy)]
struct Period {
    t0: f64,
    x0: f64,
    v0: f64,
    accel: f64,
    lane_center: f64,
    lc: Option<LaneChange>,
    lc_duration: f64,
    lane_width: f64,
}

impl Period {
    /// `(x, y, v, y', y'')` at time `t`.
    fn at(&self, t: f64) -> (f64, f64, f64, f64, f64) {
        let dt = t - self.t0;
        let x = self.x0 + self.v0 * dt + 0.5 * self.accel * dt * dt;
        let v = self.v0 + self.accel * dt;
        match self.lc {
            Some(lc) => {
                let tau = lc.tau0 + dt / self.lc_duration;
                if tau >= 1.0 {
                    return (x, self.lane_center, v, 0.0, 0.0);
                }
                let k = -f64::from(lc.direction) * self.lane_width;
                let d1 = 30.0 * tau * tau * (1.0 - tau) * (1.0 - tau) / self.lc_duration;
                let d2 = (60.0 * tau - 180.0 * tau * tau + 120.0 * tau * tau * tau) / self.lc_duration.powi(2);
                (x, lc.origin_center + k * quintic(tau), v, k * d1, k * d2)
            }
            None => (x, self.lane_center, v, 0.0, 0.0),
        }
    }
}

fn sample_action<R: Rng>(policy: &Policy, s: ManeuverState, modal: bool, rng: &mut R) -> ManeuverAction {
    let u: f64 = rng.random();
    if modal {
        return policy.modal_action(s);
    }
    let row = policy.row(s);
    let mut acc = 0.0;
    let mut last = ManeuverAction::KEEP_CRUISE;
    for a in ManeuverAction::ALL {
        let p = row[a.index()];
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = a;
        if u < acc {
            return a;
        }
    }
    last
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    epsilon: f64,
    rng: ChaCha8Rng,
    noise: GaussianNoise,
    ev: BicycleState,
    ev_plan: EvState,
    lc: Option<LaneChange>,
    ev_action: ManeuverAction,
    svs: Vec<SvAgent>,
    last_solution: Option<MpcSolution>,
    records: Vec<LogRecord>,
    in_violation: Vec<bool>,
    min_gaps: Vec<(f64, f64)>,
}

/// Runs a scenario with its configured planner, seed and risk level.
pub fn run(cfg: &ScenarioConfig) -> Result<TrajectoryLog> {
    run_with(cfg, cfg.planner, cfg.rng_seed, cfg.epsilon)
}

pub fn run_with(cfg: &ScenarioConfig, planner: PlannerKind, seed: u64, epsilon: f64) -> Result<TrajectoryLog> {
    let ev0 = cfg.ev_initial_state();
    let svs = cfg
        .svs
        .iter()
        .map(|sv| {
            let cont = SaContinuousState::new(sv.x0, sv.y0, sv.v0);
            SvAgent {
                id: sv.id.clone(),
                state: ManeuverState::new(sv.lane, 0).expect("validated lane"),
                cont,
                from: cont,
                to: cont,
                action: ManeuverAction::KEEP_CRUISE,
                speed_limit: sv.speed_limit,
            }
        })
        .collect::<Vec<_>>();
    let n = svs.len();
    let mut sim = Sim {
        cfg,
        epsilon,
        rng: ChaCha8Rng::seed_from_u64(seed),
        noise: GaussianNoise::new(&cfg.xi.matrix()),
        ev: BicycleState::new(cfg.ev.x0, cfg.ev.y0, cfg.ev.v0),
        ev_plan: EvState::new(cfg.ev.x0, cfg.ev.y0, cfg.ev.v0, ev0),
        lc: None,
        ev_action: ManeuverAction::KEEP_CRUISE,
        svs,
        last_solution: None,
        records: Vec::new(),
        in_violation: vec![false; n],
        min_gaps: vec![(f64::INFINITY, 0.0); n],
    };
    let header = RunHeader {
        scenario: cfg.name.clone(),
        planner,
        seed,
        epsilon,
        t_l: cfg.t_l,
        t_h: cfg.t_h,
        d_safe: cfg.d_safe,
        lane_width: cfg.lane_width,
    };
    sim.log_tick(0.0);
    sim.check_safety(0.0);
    let per = cfg.ticks_per_decision();
    for k in 0..cfg.decision_count() {
        let t_k = (k * per) as f64 * cfg.t_l;
        let period = match planner {
            PlannerKind::HmdpMpc => sim.decide_mpc(t_k)?,
            PlannerKind::IdmMobil => sim.decide_rule_based(t_k),
        };
        sim.step_agents(t_k);
        for i in 1..=per {
            let t = ((k * per + i) as f64) * cfg.t_l;
            sim.advance_ev(&period, t, planner);
            let w = i as f64 / per as f64;
            for sv in &mut sim.svs {
                sv.cont = if i == per { sv.to } else { lerp(&sv.from, &sv.to, w) };
            }
            sim.log_tick(t);
            sim.check_safety(t);
        }
        let t_next = ((k + 1) * per) as f64 * cfg.t_l;
        sim.finish_period(t_next, &period, planner);
    }
    let t_end = (cfg.decision_count() * per) as f64 * cfg.t_l;
    for (i, &(gap, _)) in sim.min_gaps.clone().iter().enumerate() {
        if gap.is_finite() {
            let id = sim.svs[i].id.clone();
            sim.event(t_end, EventKind::MinGap { id, gap });
        }
    }
    Ok(TrajectoryLog { header, records: sim.records })
}

fn lerp(a: &SaContinuousState, b: &SaContinuousState, w: f64) -> SaContinuousState {
    SaContinuousState { x: a.x + (b.x - a.x) * w, y: a.y + (b.y - a.y) * w, vx: a.vx + (b.vx - a.vx) * w, vy: b.vy }
}

impl Sim<'_> {
    fn event(&mut self, t: f64, event: EventKind) {
        self.records.push(LogRecord::Event(EventRecord { t, event }));
    }

    fn log_tick(&mut self, t: f64) {
        let mut vehicles = Vec::with_capacity(self.svs.len() + 1);
        vehicles.push(VehicleRecord {
            id: EGO_ID.into(),
            x: self.ev.x,
            y: self.ev.y,
            v: self.ev.v,
            lane: self.ev_plan.discrete.lane,
            action: self.ev_action,
        });
        for sv in &self.svs {
            vehicles.push(VehicleRecord {
                id: sv.id.clone(),
                x: sv.cont.x,
                y: sv.cont.y,
                v: sv.cont.vx,
                lane: sv.state.lane,
                action: sv.action,
            });
        }
        self.records.push(LogRecord::Tick(TickRecord { t, vehicles }));
    }

    fn check_safety(&mut self, t: f64) {
        let limit = self.cfg.d_safe - 0.5;
        for i in 0..self.svs.len() {
            let sv = &self.svs[i];
            if sv.state.lane != self.ev_plan.discrete.lane {
                self.in_violation[i] = false;
                continue;
            }
            let gap = (self.ev.x - sv.cont.x).abs();
            if gap < self.min_gaps[i].0 {
                self.min_gaps[i] = (gap, t);
            }
            let violating = gap < limit;
            if violating && !self.in_violation[i] {
                let id = sv.id.clone();
                self.event(t, EventKind::SafetyViolation { id, gap });
            }
            self.in_violation[i] = violating;
        }
    }

    fn ev_state(&self) -> EvState {
        EvState { x: self.ev.x, y: self.ev.y, vx: self.ev.vx(), ..self.ev_plan }
    }

    fn reachability(&self, t: f64) -> Result<Vec<ReachabilitySet>> {
        let params = self.cfg.prediction_params();
        let table = self.cfg.sv_table();
        self.svs
            .iter()
            .enumerate()
            .map(|(i, sv)| {
                let snap = AgentSnapshot {
                    state: sv.state,
                    cont: sv.cont,
                    covariance: Mat3::zeros(),
                    policy: self.cfg.policy_at(i, t),
                };
                enumerate_branches(&sv.id, &snap, &table, &params, self.cfg.horizon, self.cfg.delta_seq)
            })
            .collect()
    }

    fn decide_mpc(&mut self, t: f64) -> Result<Period> {
        let cfg = self.cfg;
        let s0 = self.ev_state();
        let reach = self.reachability(t)?;
        let table = cfg.ev_table();
        let params = cfg.ev_params_with(self.epsilon);
        let shifted_feasible = match &self.last_solution {
            Some(prev) => {
                let mut seq = prev.actions[1..].to_vec();
                seq.push(baseline_policy(prev.predicted.last().expect("nonempty plan").discrete));
                Some(evaluate_sequence(&s0, &seq, &reach, &cfg.cost_table, &table, &params)?.is_some())
            }
            None => None,
        };
        let active_branches = reach.iter().map(|r| r.branches.len()).sum();
        let (action, record_sol) = match solve(&s0, &reach, &cfg.cost_table, &table, &params) {
            Ok(sol) => (sol.actions[0], Some(sol)),
            Err(Error::NoFeasibleSequence { candidates }) => {
                self.event(t, EventKind::Fallback { candidates });
                (baseline_policy(s0.discrete), None)
            }
            Err(e) => return Err(e),
        };
        let next = ev_predict(&s0, action, &table, &params)?;
        let margins = match &record_sol {
            Some(sol) => sol.margins.clone(),
            None => crate::chance::safety_constraints(
                &crate::planner::constraint_points(&[next]),
                &reach,
                params.d_safe,
                params.epsilon,
            )?,
        };
        self.records.push(LogRecord::Decision(Box::new(DecisionRecord {
            t,
            ev: s0,
            action,
            next: next.discrete,
            plan: record_sol.as_ref().map_or_else(|| vec![action], |s| s.actions.clone()),
            cost: record_sol.as_ref().map(MpcSolution::value),
            feasible_count: record_sol.as_ref().map_or(0, |s| s.feasible_count),
            candidate_count: record_sol.as_ref().map_or(0, |s| s.candidate_count),
            active_branches,
            fallback: record_sol.is_none(),
            shifted_feasible,
            margins,
        })));
        self.last_solution = record_sol;
        Ok(self.commit(t, s0, action, next))
    }

    /// Starts the period for `action` taken from `s0` and reaching `next`.
    fn commit(&mut self, t: f64, s0: EvState, action: ManeuverAction, next: EvState) -> Period {
        let w = self.cfg.lane_width;
        if action.lat != 0 {
            self.lc =
                Some(LaneChange { origin_center: lane_center(s0.discrete.lane, w), direction: action.lat, tau0: 0.0 });
            let (from, to) = (s0.discrete.lane, next.discrete.lane);
            self.event(t, EventKind::LaneChangeStart { from, to, x: s0.x });
        } else if let Some(lc) = &mut self.lc {
            lc.tau0 = s0.lc_progress;
        }
        self.ev_action = action;
        self.ev_plan = EvState { x: s0.x, y: s0.y, vx: s0.vx, ..next };
        Period {
            t0: t,
            x0: s0.x,
            v0: s0.vx,
            accel: f64::from(next.discrete.long) * self.cfg.a_avg,
            lane_center: lane_center(next.discrete.lane, w),
            lc: self.lc,
            lc_duration: self.cfg.lc_duration,
            lane_width: w,
        }
    }

    fn lane_vehicles(&self) -> Vec<LaneVehicle> {
        self.svs.iter().map(|s| LaneVehicle { x: s.cont.x, v: s.cont.vx, lane: s.state.lane }).collect()
    }

    fn decide_rule_based(&mut self, t: f64) -> Period {
        let cfg = self.cfg;
        let s0 = self.ev_state();
        let ego = LaneVehicle { x: s0.x, v: self.ev.v, lane: s0.discrete.lane };
        let decision = if s0.in_lane_change() {
            LaneDecision::Keep
        } else {
            let others = self.lane_vehicles();
            let table = cfg.ev_table();
            let from = s0.discrete;
            let allowed = |lane: u8| {
                let lat = lane as i8 - from.lane as i8;
                ManeuverAction::new(lat, 0).is_some_and(|a| table.get(from, a).is_some())
            };
            let follower_idm = cfg.idm.with_v0(cfg.idm.v0.max(cfg.ev.v0));
            mobil_decide(&ego, &others, allowed, cfg.vehicle_length, &cfg.idm, &follower_idm, &cfg.mobil)
        };
        let action = ManeuverAction { lat: decision.lateral(), long: -s0.discrete.long };
        let params = cfg.ev_params_with(self.epsilon);
        let next = ev_predict(&s0, action, &cfg.ev_table(), &params).expect("lane kept on the road");
        self.records.push(LogRecord::Decision(Box::new(DecisionRecord {
            t,
            ev: s0,
            action,
            next: next.discrete,
            plan: vec![action],
            cost: None,
            feasible_count: 0,
            candidate_count: 0,
            active_branches: 0,
            fallback: false,
            shifted_feasible: None,
            margins: Vec::new(),
        })));
        self.commit(t, s0, action, next)
    }

    fn step_agents(&mut self, t: f64) {
        let cfg = self.cfg;
        let params = cfg.prediction_params();
        let table = cfg.sv_table();
        let sv_idm = cfg.idm;
        let ev_lane = self.ev_plan.discrete.lane;
        let mut vehicles: Vec<LaneVehicle> = self.lane_vehicles();
        vehicles.push(LaneVehicle { x: self.ev.x, v: self.ev.vx(), lane: ev_lane });
        for i in 0..self.svs.len() {
            let policy = cfg.policy_at(i, t);
            let sv = &self.svs[i];
            let action = sample_action(policy, sv.state, cfg.modal_truth, &mut self.rng);
            let next = table.get(sv.state, action).expect("policies only support feasible actions");
            let mut d = step_dynamics(action, next, &sv.cont, &params);
            let v = sv.cont.vx;
            let mut accel = f64::from(next.long) * cfg.a_avg * cfg.model_mismatch;
            if let Some(limit) = sv.speed_limit {
                if accel > 0.0 {
                    accel = accel.min(((limit - v) / cfg.t_h).max(0.0));
                }
            }
            if cfg.sv_following {
                let me = LaneVehicle { x: sv.cont.x, v, lane: next.lane };
                let others: Vec<_> = vehicles.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, o)| *o).collect();
                let (leader, _) = crate::baseline::neighbors(me.x, me.lane, &others);
                if let Some(l) = leader {
                    let gap = l.x - me.x - cfg.vehicle_length;
                    let idm = sv_idm.with_v0(sv.speed_limit.unwrap_or(v.max(1.0)));
                    if gap < idm.desired_gap(v, v - l.v) {
                        accel = accel.min(accel_behind(&me, Some(&l), cfg.vehicle_length, &idm));
                    }
                }
            }
            accel = accel.max(-v / cfg.t_h).max(-cfg.idm.b_emergency);
            d.f[0] = accel;
            let mut to = crate::plant::sv_step_truth(&sv.cont, &d, &self.noise, &mut self.rng);
            to.vx = to.vx.max(0.0);
            let sv = &mut self.svs[i];
            sv.from = sv.cont;
            sv.to = to;
            sv.action = action;
            sv.state = next;
        }
    }

    fn advance_ev(&mut self, period: &Period, t: f64, planner: PlannerKind) {
        let cfg = self.cfg;
        let t_prev = t - cfg.t_l;
        if cfg.ideal_ev && planner == PlannerKind::HmdpMpc {
            let (x, y, v, _, _) = period.at(t);
            self.ev = BicycleState { x, y, psi: 0.0, v };
            return;
        }
        let (_, y_ref, v_ref, yd, ydd) = period.at(t_prev);
        let vp = &cfg.vehicle;
        let v = self.ev.v.max(1.0);
        let gains =
            TrackingGains::scheduled(cfg.tracking.kp_v, v, vp.wheelbase, cfg.tracking.omega_n, cfg.tracking.zeta);
        let mut reference = TrackingReference { y_ref, v_ref, accel_ff: 0.0, steer_ff: 0.0 };
        match planner {
            PlannerKind::HmdpMpc => {
                if cfg.tracking.feedforward {
                    reference.accel_ff = period.accel;
                }
            }
            PlannerKind::IdmMobil => {
                reference.v_ref = self.ev.v;
                reference.accel_ff = self.idm_command();
            }
        }
        if cfg.tracking.feedforward {
            reference.steer_ff = gains.kd_y * yd + (vp.wheelbase * ydd / (v * v)).atan();
        }
        let u = track(&self.ev, &reference, &gains, vp);
        self.ev = bicycle_step(&self.ev, &u, cfg.t_l, vp.wheelbase);
    }

    /// IDM command of the rule-based driver against leaders in the target
    /// lane and, while changing lanes, in the lane being left.
    fn idm_command(&self) -> f64 {
        let cfg = self.cfg;
        let me = LaneVehicle { x: self.ev.x, v: self.ev.v, lane: self.ev_plan.discrete.lane };
        let others = self.lane_vehicles();
        let mut lanes = vec![me.lane];
        if let Some(lc) = &self.lc {
            let origin = crate::predictor::nearest_lane(lc.origin_center, cfg.lane_width);
            if origin != me.lane {
                lanes.push(origin);
            }
        }
        lanes
            .into_iter()
            .map(|lane| {
                let (leader, _) = crate::baseline::neighbors(me.x, lane, &others);
                match leader {
                    Some(l) => idm_accel(me.v, l.x - me.x - cfg.vehicle_length, me.v - l.v, &cfg.idm),
                    None => idm_accel(me.v, f64::INFINITY, 0.0, &cfg.idm),
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn finish_period(&mut self, t: f64, _period: &Period, _planner: PlannerKind) {
        if self.lc.is_some() && !self.ev_plan.in_lane_change() {
            self.lc = None;
            let lane = self.ev_plan.discrete.lane;
            let x = self.ev.x;
            self.event(t, EventKind::LaneChangeEnd { lane, x });
        }
    }
}
