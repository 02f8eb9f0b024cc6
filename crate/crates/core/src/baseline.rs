//! Rule-based comparison driver: IDM car following with MOBIL lane
//! changes.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdmParams {
    pub v0: f64,
    pub time_headway: f64,
    pub a: f64,
    pub b: f64,
    pub s0: f64,
    pub delta_exp: f64,
    pub b_emergency: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self { v0: 30.0, time_headway: 1.5, a: 2.0, b: 3.0, s0: 2.0, delta_exp: 4.0, b_emergency: 8.0 }
    }
}

impl IdmParams {
    pub fn with_v0(self, v0: f64) -> Self {
        Self { v0, ..self }
    }

    /// Dynamic desired gap `s*`.
    pub fn desired_gap(&self, v: f64, dv: f64) -> f64 {
        self.s0 + (v * self.time_headway + v * dv / (2.0 * (self.a * self.b).sqrt())).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilParams {
    pub politeness: f64,
    pub a_threshold: f64,
    pub b_safe: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        Self { politeness: 0.3, a_threshold: 0.1, b_safe: 4.0 }
    }
}

/// IDM acceleration for speed `v`, bumper gap `gap` and closing speed `dv`
/// (positive when approaching the leader). An absent leader is an
/// infinite gap.
pub fn idm_accel(v: f64, gap: f64, dv: f64, p: &IdmParams) -> f64 {
    let free = (v / p.v0).powf(p.delta_exp);
    let interaction = if gap.is_finite() {
        let s_star = p.desired_gap(v, dv);
        (s_star / gap.max(1e-3)).powi(2)
    } else {
        0.0
    };
    (p.a * (1.0 - free - interaction)).clamp(-p.b_emergency, p.a)
}

/// Longitudinal snapshot of one vehicle for lane-change reasoning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneVehicle {
    pub x: f64,
    pub v: f64,
    pub lane: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneDecision {
    Keep,
    Left,
    Right,
}

impl LaneDecision {
    pub fn lateral(self) -> i8 {
        match self {
            Self::Keep => 0,
            Self::Left => -1,
            Self::Right => 1,
        }
    }
}

/// Nearest vehicles ahead of and behind `x` in `lane`.
pub fn neighbors(x: f64, lane: u8, others: &[LaneVehicle]) -> (Option<LaneVehicle>, Option<LaneVehicle>) {
    let mut leader: Option<LaneVehicle> = None;
    let mut follower: Option<LaneVehicle> = None;
    for o in others.iter().filter(|o| o.lane == lane) {
        if o.x >= x {
            if leader.is_none_or(|l| o.x < l.x) {
                leader = Some(*o);
            }
        } else if follower.is_none_or(|f| o.x > f.x) {
            follower = Some(*o);
        }
    }
    (leader, follower)
}

/// IDM acceleration of `me` behind `leader`, gaps measured bumper to
/// bumper with vehicles of length `length`.
pub fn accel_behind(me: &LaneVehicle, leader: Option<&LaneVehicle>, length: f64, p: &IdmParams) -> f64 {
    match leader {
        Some(l) => idm_accel(me.v, l.x - me.x - length, me.v - l.v, p),
        None => idm_accel(me.v, f64::INFINITY, 0.0, p),
    }
}

/// MOBIL lane choice for `ego` among `others`. `allowed(lane)` filters
/// target lanes; left is tried before right.
pub fn mobil_decide(
    ego: &LaneVehicle,
    others: &[LaneVehicle],
    allowed: impl Fn(u8) -> bool,
    length: f64,
    ip: &IdmParams,
    follower_idm: &IdmParams,
    mp: &MobilParams,
) -> LaneDecision {
    let (old_leader, old_follower) = neighbors(ego.x, ego.lane, others);
    let a_old = accel_behind(ego, old_leader.as_ref(), length, ip);
    // the current follower would close up on our old leader
    let old_follower_gain = old_follower.map_or(0.0, |f| {
        accel_behind(&f, old_leader.as_ref(), length, follower_idm) - accel_behind(&f, Some(ego), length, follower_idm)
    });

    for (decision, dl) in [(LaneDecision::Left, -1i8), (LaneDecision::Right, 1)] {
        let target = ego.lane as i8 + dl;
        if !(1..=3).contains(&target) || !allowed(target as u8) {
            continue;
        }
        let target = target as u8;
        let (leader, follower) = neighbors(ego.x, target, others);
        let moved = LaneVehicle { lane: target, ..*ego };
        if leader.is_some_and(|l| l.x - ego.x < length) || follower.is_some_and(|f| ego.x - f.x < length) {
            continue;
        }
        let a_new = accel_behind(&moved, leader.as_ref(), length, ip);
        let (new_follower_after, new_follower_gain) = match follower {
            Some(f) => {
                let after = accel_behind(&f, Some(&moved), length, follower_idm);
                (after, after - accel_behind(&f, leader.as_ref(), length, follower_idm))
            }
            None => (0.0, 0.0),
        };
        if new_follower_after < -mp.b_safe || a_new < -mp.b_safe {
            continue;
        }
        let incentive = a_new - a_old + mp.politeness * (new_follower_gain + old_follower_gain);
        if incentive > mp.a_threshold {
            return decision;
        }
    }
    LaneDecision::Keep
}
