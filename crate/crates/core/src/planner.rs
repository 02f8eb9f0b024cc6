//! Ego maneuver planner: exhaustive search over discrete action sequences.
//!
//! Every candidate sequence of length `H` that respects the transition
//! table (and never aborts a lane change in flight) is rolled out with the
//! ego prediction model, checked against the chance constraints of every
//! retained branch of every surrounding agent, and scored with the
//! maneuver cost table plus the baseline cost-to-go. Only the first action
//! of the best sequence is executed.

use serde::{Deserialize, Serialize};

use crate::chance::{safety_constraints, ConstraintMargin, SafetyIndex};
use crate::error::{Error, Result};
use crate::hmdp::{ManeuverAction, ManeuverState, TransitionTable};
use crate::predictor::{lane_center, ReachabilitySet, Vec3};

/// Minimum-jerk quintic `c1 t^3 + c2 t^4 + c3 t^5`.
pub const QUINTIC: [f64; 3] = [10.0, -15.0, 6.0];

pub fn quintic(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    let t3 = t * t * t;
    t3 * (QUINTIC[0] + t * (QUINTIC[1] + t * QUINTIC[2]))
}

/// Ego state at a decision instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub discrete: ManeuverState,
    /// Normalized clock of an in-flight lane change, 0 when none is active.
    pub lc_progress: f64,
    /// Lateral action that started the in-flight change (-1 left, +1 right).
    #[serde(default)]
    pub lc_direction: i8,
}

impl EvState {
    pub fn new(x: f64, y: f64, vx: f64, discrete: ManeuverState) -> Self {
        Self { x, y, vx, discrete, lc_progress: 0.0, lc_direction: 0 }
    }

    pub fn in_lane_change(&self) -> bool {
        self.lc_progress > 0.0 && self.lc_progress < 1.0
    }

    pub fn as_vec3(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.vx)
    }
}

/// Maneuver cost coefficients, rows indexed by longitudinal mode
/// (accelerate, cruise, decelerate) and columns by lateral action
/// (left, keep, right).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct CostTable {
    c: [[f64; 3]; 3],
}

impl CostTable {
    pub fn new(c: [[f64; 3]; 3]) -> Result<Self> {
        for (m, row) in c.iter().enumerate() {
            for (n, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidCostTable(format!(
                        "entry ({m}, {n}) = {v} must be finite and nonnegative"
                    )));
                }
                if v == 0.0 && (m, n) != (1, 1) {
                    return Err(Error::InvalidCostTable(format!(
                        "entry ({m}, {n}) is zero; only cruise with lane keeping may be free"
                    )));
                }
            }
        }
        if c[1][1] != 0.0 {
            return Err(Error::InvalidCostTable("cruise with lane keeping must cost 0".into()));
        }
        Ok(Self { c })
    }

    /// Coefficients of the reference highway scenario.
    pub fn reference() -> Self {
        Self { c: [[6.0, 5.0, 6.0], [2.0, 0.0, 2.0], [11.0, 9.0, 11.0]] }
    }

    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.c
    }

    pub fn get(&self, long_mode: i8, a_lat: i8) -> f64 {
        self.c[mode_row(long_mode)][lat_col(a_lat)]
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        let mut c = self.c;
        c.iter_mut().flatten().for_each(|v| *v *= k);
        Self::new(c)
    }
}

impl Default for CostTable {
    fn default() -> Self {
        Self::reference()
    }
}

impl TryFrom<[[f64; 3]; 3]> for CostTable {
    type Error = Error;
    fn try_from(c: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(c)
    }
}

impl From<CostTable> for [[f64; 3]; 3] {
    fn from(t: CostTable) -> Self {
        t.c
    }
}

fn mode_row(long_mode: i8) -> usize {
    (1 - long_mode) as usize
}

fn lat_col(a_lat: i8) -> usize {
    (a_lat + 1) as usize
}

/// One-hot encodings of a step: `(accelerate, cruise, decelerate)` of the
/// reached mode and `(left, keep, right)` of the lateral action.
pub fn one_hot(next: ManeuverState, a: ManeuverAction) -> ([u8; 3], [u8; 3]) {
    let mut s = [0; 3];
    let mut l = [0; 3];
    s[mode_row(next.long)] = 1;
    l[lat_col(a.lat)] = 1;
    (s, l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvParams {
    pub t_h: f64,
    pub horizon: usize,
    pub a_avg: f64,
    pub lane_width: f64,
    pub lc_duration: f64,
    pub d_safe: f64,
    pub epsilon: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl EvParams {
    /// Whole decision periods per lane change.
    pub fn lc_steps(&self) -> usize {
        ((self.lc_duration / self.t_h).round() as usize).max(1)
    }
}

/// Propagates the ego state over one decision period under `action`.
pub fn ev_predict(s: &EvState, action: ManeuverAction, table: &TransitionTable, p: &EvParams) -> Result<EvState> {
    if s.in_lane_change() && action.lat != 0 {
        return Err(Error::LaneChangeInFlight { action });
    }
    let next = crate::hmdp::transition(s.discrete, action, table)?;
    let t = p.t_h;
    let acc = f64::from(next.long) * p.a_avg;
    let x = s.x + s.vx * t + 0.5 * acc * t * t;
    let vx = s.vx + acc * t;

    let (tau, dir) = if action.lat != 0 { (0.0, action.lat) } else { (s.lc_progress, s.lc_direction) };
    let (y, lc_progress, lc_direction) = if dir != 0 && (action.lat != 0 || s.in_lane_change()) {
        let n = p.lc_steps() as f64;
        let done = (tau * n).round() + 1.0;
        let tau_next = (done / n).min(1.0);
        let dy = -f64::from(dir) * p.lane_width * (quintic(tau_next) - quintic(tau));
        if tau_next >= 1.0 {
            (s.y + dy, 0.0, 0)
        } else {
            (s.y + dy, tau_next, dir)
        }
    } else {
        (s.y, 0.0, 0)
    };
    Ok(EvState { x, y, vx, discrete: next, lc_progress, lc_direction })
}

/// Actions admissible from `s`: table-feasible and, during a lane change,
/// lane keeping only.
pub fn admissible_ev_actions(s: &EvState, table: &TransitionTable) -> Vec<ManeuverAction> {
    ManeuverAction::ALL
        .into_iter()
        .filter(|&a| table.get(s.discrete, a).is_some() && !(s.in_lane_change() && a.lat != 0))
        .collect()
}

/// All admissible sequences of length `horizon`, in lexicographic order of
/// action index.
pub fn enumerate_ev_sequences(
    s0: &EvState,
    horizon: usize,
    table: &TransitionTable,
    p: &EvParams,
) -> Vec<Vec<ManeuverAction>> {
    fn go(
        s: &EvState,
        left: usize,
        table: &TransitionTable,
        p: &EvParams,
        prefix: &mut Vec<ManeuverAction>,
        out: &mut Vec<Vec<ManeuverAction>>,
    ) {
        if left == 0 {
            out.push(prefix.clone());
            return;
        }
        for a in admissible_ev_actions(s, table) {
            let next = ev_predict(s, a, table, p).expect("admissible action");
            prefix.push(a);
            go(&next, left - 1, table, p, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(s0, horizon, table, p, &mut Vec::with_capacity(horizon), &mut out);
    out
}

/// `states[k]` is the mode reached by `actions[k]`.
pub fn stage_cost(actions: &[ManeuverAction], states: &[ManeuverState], ct: &CostTable) -> f64 {
    actions.iter().zip(states).map(|(a, s)| ct.get(s.long, a.lat)).sum()
}

/// Keep the lane and step the longitudinal mode toward cruise.
pub fn baseline_policy(s: ManeuverState) -> ManeuverAction {
    ManeuverAction { lat: 0, long: -s.long }
}

/// Cost of the baseline rollout from `s` until a cruise mode is reached.
pub fn terminal_cost(s: ManeuverState, ct: &CostTable, table: &TransitionTable) -> f64 {
    let mut s = s;
    let mut total = 0.0;
    for _ in 0..crate::hmdp::NUM_STATES {
        if s.is_goal() {
            break;
        }
        let a = baseline_policy(s);
        let Some(next) = table.get(s, a) else { break };
        total += ct.get(next.long, a.lat);
        s = next;
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    pub actions: Vec<ManeuverAction>,
    pub predicted: Vec<EvState>,
    pub stage_cost: f64,
    pub terminal_cost: f64,
    pub margins: Vec<ConstraintMargin>,
    pub feasible_count: usize,
    pub candidate_count: usize,
}

impl MpcSolution {
    pub fn value(&self) -> f64 {
        self.stage_cost + self.terminal_cost
    }
}

fn speed_ok(v: f64, p: &EvParams) -> bool {
    v >= p.v_min - 1e-9 && v <= p.v_max + 1e-9
}

/// Ego predictions paired with their lanes, as consumed by
/// [`safety_constraints`].
pub fn constraint_points(predicted: &[EvState]) -> Vec<(ManeuverState, Vec3)> {
    predicted.iter().map(|s| (s.discrete, s.as_vec3())).collect()
}

/// Rolls out a fixed sequence. Returns `None` when it is not admissible,
/// leaves the speed band, or violates a constraint.
pub fn evaluate_sequence(
    s0: &EvState,
    actions: &[ManeuverAction],
    reach: &[ReachabilitySet],
    ct: &CostTable,
    table: &TransitionTable,
    p: &EvParams,
) -> Result<Option<MpcSolution>> {
    let mut s = *s0;
    let mut predicted = Vec::with_capacity(actions.len());
    for &a in actions {
        s = match ev_predict(&s, a, table, p) {
            Ok(next) => next,
            Err(Error::InfeasibleTransition { .. } | Error::LaneChangeInFlight { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        if !speed_ok(s.vx, p) {
            return Ok(None);
        }
        predicted.push(s);
    }
    let margins = safety_constraints(&constraint_points(&predicted), reach, p.d_safe, p.epsilon)?;
    if margins.iter().any(|m| !m.satisfied) {
        return Ok(None);
    }
    let states: Vec<_> = predicted.iter().map(|s| s.discrete).collect();
    let last = states.last().copied().unwrap_or(s0.discrete);
    Ok(Some(MpcSolution {
        actions: actions.to_vec(),
        stage_cost: stage_cost(actions, &states, ct),
        terminal_cost: terminal_cost(last, ct, table),
        predicted,
        margins,
        feasible_count: 1,
        candidate_count: 1,
    }))
}

struct Search<'a> {
    index: &'a SafetyIndex,
    ct: &'a CostTable,
    table: &'a TransitionTable,
    p: &'a EvParams,
    prefix: Vec<ManeuverAction>,
    states: Vec<EvState>,
    best: Option<(f64, Vec<ManeuverAction>, Vec<EvState>)>,
    feasible: usize,
    candidates: usize,
}

impl Search<'_> {
    fn leaves(&self, s: &EvState, depth: usize) -> usize {
        if depth == 0 {
            return 1;
        }
        admissible_ev_actions(s, self.table)
            .into_iter()
            .map(|a| self.leaves(&ev_predict(s, a, self.table, self.p).expect("admissible action"), depth - 1))
            .sum()
    }

    fn descend(&mut self, s: &EvState, cost: f64) {
        let step = self.prefix.len() + 1;
        if step > self.p.horizon {
            self.candidates += 1;
            self.feasible += 1;
            let total = cost + terminal_cost(s.discrete, self.ct, self.table);
            let better = match &self.best {
                None => true,
                Some((b, _, _)) => total < b - 1e-9 * b.abs().max(1.0),
            };
            if better {
                self.best = Some((total, self.prefix.clone(), self.states.clone()));
            }
            return;
        }
        for a in admissible_ev_actions(s, self.table) {
            let next = ev_predict(s, a, self.table, self.p).expect("admissible action");
            if !speed_ok(next.vx, self.p) || !self.index.is_safe(step, next.discrete.lane, next.x) {
                self.candidates += self.leaves(&next, self.p.horizon - step);
                continue;
            }
            self.prefix.push(a);
            self.states.push(next);
            self.descend(&next, cost + self.ct.get(next.discrete.long, a.lat));
            self.prefix.pop();
            self.states.pop();
        }
    }
}

/// Exact minimization over all admissible sequences. Infeasible prefixes
/// are cut early; ties keep the lexicographically first sequence.
pub fn solve(
    s0: &EvState,
    reach: &[ReachabilitySet],
    ct: &CostTable,
    table: &TransitionTable,
    p: &EvParams,
) -> Result<MpcSolution> {
    let index = SafetyIndex::new(reach, p.horizon, p.d_safe, p.epsilon)?;
    let mut search = Search {
        index: &index,
        ct,
        table,
        p,
        prefix: Vec::with_capacity(p.horizon),
        states: Vec::with_capacity(p.horizon),
        best: None,
        feasible: 0,
        candidates: 0,
    };
    search.descend(s0, 0.0);
    let Some((_, actions, predicted)) = search.best else {
        return Err(Error::NoFeasibleSequence { candidates: search.candidates });
    };
    let states: Vec<_> = predicted.iter().map(|s| s.discrete).collect();
    let margins = safety_constraints(&constraint_points(&predicted), reach, p.d_safe, p.epsilon)?;
    Ok(MpcSolution {
        stage_cost: stage_cost(&actions, &states, ct),
        terminal_cost: terminal_cost(*states.last().expect("horizon >= 1"), ct, table),
        actions,
        predicted,
        margins,
        feasible_count: search.feasible,
        candidate_count: search.candidates,
    })
}

/// Brute-force counterpart of [`solve`] over [`enumerate_ev_sequences`].
pub fn solve_brute_force(
    s0: &EvState,
    reach: &[ReachabilitySet],
    ct: &CostTable,
    table: &TransitionTable,
    p: &EvParams,
) -> Result<MpcSolution> {
    let seqs = enumerate_ev_sequences(s0, p.horizon, table, p);
    let candidates = seqs.len();
    let mut best: Option<MpcSolution> = None;
    let mut feasible = 0;
    for seq in seqs {
        if let Some(sol) = evaluate_sequence(s0, &seq, reach, ct, table, p)? {
            feasible += 1;
            let better = match &best {
                None => true,
                Some(b) => sol.value() < b.value() - 1e-9 * b.value().abs().max(1.0),
            };
            if better {
                best = Some(sol);
            }
        }
    }
    let mut best = best.ok_or(Error::NoFeasibleSequence { candidates })?;
    best.feasible_count = feasible;
    best.candidate_count = candidates;
    Ok(best)
}

/// Continuous-time lateral reference of a lane change started at `y0`.
pub fn lane_change_offset(direction: i8, lane_width: f64, tau: f64) -> f64 {
    -f64::from(direction) * lane_width * quintic(tau)
}

/// Center of the lane the ego state is heading to.
pub fn target_center(s: &EvState, lane_width: f64) -> f64 {
    lane_center(s.discrete.lane, lane_width)
}
