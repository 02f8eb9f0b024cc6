//! Multi-modal prediction of surrounding agents.
//!
//! Each agent follows mode-dependent affine dynamics
//!
//! ```text
//! x[k+1] = A(mode) x[k] + B(mode) F(mode) + w,   w ~ N(0, Xi)
//! Q[k+1] = A(mode) Q[k] A(mode)^T + Xi
//! ```
//!
//! over the state `[x, y, vx]`. Lane keeping uses a constant
//! acceleration model; lane changes add a PD pull of `y` toward the target
//! lane center. The `-K1 * y` feedback of the PD law lives in `A`, so the
//! lateral entry of `F` carries the remaining affine part
//! `K1 * y_ref - K2 * vy`.
//!
//! Action sequences are enumerated depth first and a prefix is dropped as
//! soon as its probability falls below the cumulative threshold, which is
//! exact because every per-step probability is at most one.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmdp::{ManeuverAction, ManeuverState, Policy, TransitionTable, NUM_LANES};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const PSD_TOL: f64 = 1e-9;

/// Continuous state of a surrounding agent. `vy` only feeds the derivative
/// term of the lateral PD proxy and is not part of the propagated state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaContinuousState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
}

impl SaContinuousState {
    pub fn new(x: f64, y: f64, vx: f64) -> Self {
        Self { x, y, vx, vy: 0.0 }
    }

    pub fn as_vec3(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.vx)
    }

    fn with_vec3(&self, v: Vec3) -> Self {
        Self { x: v[0], y: v[1], vx: v[2], vy: self.vy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeDynamics {
    pub a: Mat3,
    pub b: Matrix3x2<f64>,
    pub f: Vector2<f64>,
    pub xi: Mat3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionParams {
    pub t_h: f64,
    pub k1: f64,
    pub k2: f64,
    pub a_avg: f64,
    pub lane_width: f64,
    pub xi: Mat3,
    /// Lateral error below which a lane change counts as finished.
    pub lateral_tolerance: f64,
}

impl PredictionParams {
    pub fn new(t_h: f64, k1: f64, k2: f64, a_avg: f64, lane_width: f64, xi: Mat3) -> Self {
        Self { t_h, k1, k2, a_avg, lane_width, xi, lateral_tolerance: 0.2 }
    }
}

/// Lateral coordinate of a lane center; lane 1 is leftmost and has the
/// largest `y`.
pub fn lane_center(lane: u8, lane_width: f64) -> f64 {
    ((NUM_LANES as f64 + 1.0) / 2.0 - lane as f64) * lane_width
}

/// Lane whose center is nearest to `y`, clamped to the road.
pub fn nearest_lane(y: f64, lane_width: f64) -> u8 {
    let raw = (NUM_LANES as f64 + 1.0) / 2.0 - y / lane_width;
    raw.round().clamp(1.0, NUM_LANES as f64) as u8
}

/// Dynamics for lateral action `a_lat` and longitudinal phase `s_long`.
/// `y_ref` is the target lane center and `vy` the current lateral velocity;
/// both only matter for lane changes.
pub fn mode_dynamics(a_lat: i8, s_long: i8, y_ref: f64, vy: f64, p: &PredictionParams) -> ModeDynamics {
    let t = p.t_h;
    let half_t2 = 0.5 * t * t;
    let mut a = Mat3::identity();
    a[(0, 2)] = t;
    let mut b = Matrix3x2::zeros();
    b[(0, 0)] = half_t2;
    b[(2, 0)] = t;
    let mut f = Vector2::new(s_long as f64 * p.a_avg, 0.0);
    if a_lat != 0 {
        a[(1, 1)] = 1.0 - half_t2 * p.k1;
        b[(1, 1)] = half_t2;
        f[1] = p.k1 * y_ref - p.k2 * vy;
    }
    ModeDynamics { a, b, f, xi: p.xi }
}

/// Dynamics an agent follows after taking `action` and landing in `next`.
/// The lane-change model stays engaged until the agent is within the
/// lateral tolerance of its target lane center.
pub fn step_dynamics(
    action: ManeuverAction,
    next: ManeuverState,
    x: &SaContinuousState,
    p: &PredictionParams,
) -> ModeDynamics {
    let y_ref = lane_center(next.lane, p.lane_width);
    let changing = action.lat != 0 || (x.y - y_ref).abs() >= p.lateral_tolerance;
    let a_lat = if !changing {
        0
    } else if action.lat != 0 {
        action.lat
    } else if y_ref > x.y {
        -1
    } else {
        1
    };
    mode_dynamics(a_lat, next.long, y_ref, x.vy, p)
}

/// Noise-free mean update `A x + B F`.
pub fn propagate_mean(x: &SaContinuousState, d: &ModeDynamics) -> SaContinuousState {
    x.with_vec3(d.a * x.as_vec3() + d.b * d.f)
}

/// Symmetry defect and smallest eigenvalue of `q`.
pub fn psd_defect(q: &Mat3) -> (f64, f64) {
    let asym = (q - q.transpose()).abs().max();
    let sym = 0.5 * (q + q.transpose());
    let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
    (asym, min_eig)
}

pub fn check_psd(q: &Mat3) -> Result<()> {
    let (asymmetry, min_eigenvalue) = psd_defect(q);
    if asymmetry > PSD_TOL || min_eigenvalue < -PSD_TOL || !q.iter().all(|v| v.is_finite()) {
        return Err(Error::NonPsdInput { min_eigenvalue, asymmetry });
    }
    Ok(())
}

/// `A Q A^T + Xi`.
pub fn propagate_covariance(q: &Mat3, d: &ModeDynamics) -> Result<Mat3> {
    check_psd(q)?;
    let next = d.a * q * d.a.transpose() + d.xi;
    Ok(0.5 * (next + next.transpose()))
}

/// One retained action sequence with its predicted trajectory. Index `j`
/// of every vector refers to prediction step `j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBranch {
    pub actions: Vec<ManeuverAction>,
    pub states: Vec<ManeuverState>,
    pub means: Vec<SaContinuousState>,
    pub covariances: Vec<Mat3>,
    pub probability: f64,
}

/// All retained branches of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachabilitySet {
    pub agent_id: String,
    pub branches: Vec<PredictionBranch>,
}

impl ReachabilitySet {
    pub fn horizon(&self) -> usize {
        self.branches.first().map_or(0, |b| b.actions.len())
    }
}

/// Initial conditions of one agent's prediction.
#[derive(Debug, Clone, Copy)]
pub struct AgentSnapshot<'a> {
    pub state: ManeuverState,
    pub cont: SaContinuousState,
    pub covariance: Mat3,
    pub policy: &'a Policy,
}

pub fn enumerate_branches(
    agent_id: &str,
    init: &AgentSnapshot<'_>,
    table: &TransitionTable,
    params: &PredictionParams,
    horizon: usize,
    delta_seq: f64,
) -> Result<ReachabilitySet> {
    check_psd(&init.covariance)?;
    let mut out = Vec::new();
    let mut prefix = Prefix::default();
    descend(
        init,
        init.state,
        init.cont,
        init.covariance,
        1.0,
        table,
        params,
        horizon,
        delta_seq,
        &mut prefix,
        &mut out,
    );
    if out.is_empty() {
        return Err(Error::EmptyScenarioTree { agent: agent_id.to_string(), threshold: delta_seq });
    }
    Ok(ReachabilitySet { agent_id: agent_id.to_string(), branches: out })
}

#[derive(Default)]
struct Prefix {
    actions: Vec<ManeuverAction>,
    states: Vec<ManeuverState>,
    means: Vec<SaContinuousState>,
    covariances: Vec<Mat3>,
}

#[allow(clippy::too_many_arguments)]
fn descend(
    init: &AgentSnapshot<'_>,
    s: ManeuverState,
    x: SaContinuousState,
    q: Mat3,
    prob: f64,
    table: &TransitionTable,
    params: &PredictionParams,
    horizon: usize,
    delta_seq: f64,
    prefix: &mut Prefix,
    out: &mut Vec<PredictionBranch>,
) {
    if prefix.actions.len() == horizon {
        out.push(PredictionBranch {
            actions: prefix.actions.clone(),
            states: prefix.states.clone(),
            means: prefix.means.clone(),
            covariances: prefix.covariances.clone(),
            probability: prob,
        });
        return;
    }
    for a in ManeuverAction::ALL {
        let p = init.policy.prob(s, a);
        if p <= 0.0 {
            continue;
        }
        let next_prob = prob * p;
        if next_prob < delta_seq {
            continue;
        }
        let Some(next) = table.get(s, a) else { continue };
        let d = step_dynamics(a, next, &x, params);
        let mean = propagate_mean(&x, &d);
        let raw = d.a * q * d.a.transpose() + d.xi;
        let cov = 0.5 * (raw + raw.transpose());
        prefix.actions.push(a);
        prefix.states.push(next);
        prefix.means.push(mean);
        prefix.covariances.push(cov);
        descend(init, next, mean, cov, next_prob, table, params, horizon, delta_seq, prefix, out);
        prefix.actions.pop();
        prefix.states.pop();
        prefix.means.pop();
        prefix.covariances.pop();
    }
}

/// Two-sigma ellipse of the `(x, y)` marginal: semi-axes and orientation of
/// the major axis in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle: f64,
}

pub fn two_sigma_ellipse(q: &Mat3) -> Ellipse {
    let block = Matrix2::new(q[(0, 0)], q[(0, 1)], q[(1, 0)], q[(1, 1)]);
    let eig = SymmetricEigen::new(block);
    let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let v = eig.eigenvectors.column(major);
    Ellipse {
        semi_major: 2.0 * eig.eigenvalues[major].max(0.0).sqrt(),
        semi_minor: 2.0 * eig.eigenvalues[minor].max(0.0).sqrt(),
        angle: v[1].atan2(v[0]),
    }
}
