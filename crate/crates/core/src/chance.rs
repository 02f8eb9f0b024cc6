//! Deterministic reformulation of affine-Gaussian chance constraints.
//!
//! For `h = c_ea . x_ea + c_sa . x_sa + c` with `x_sa ~ N(mean, Q)`,
//! `P(h >= 0) >= 1 - eps` holds exactly when
//!
//! ```text
//! c_ea . x_ea + c_sa . mean + c >= Phi^-1(1 - eps) * sqrt(c_sa^T Q c_sa)
//! ```
//!
//! The longitudinal safety constraints compare the ego position with every
//! retained branch of every agent at every step where both intend to be in
//! the same lane.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmdp::ManeuverState;
use crate::predictor::{Mat3, ReachabilitySet, Vec3};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// Rational approximation coefficients (central region and tails).
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.38357751867269e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
const P_LOW: f64 = 0.02425;

fn rational_quantile(p: f64) -> f64 {
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -rational_quantile(1.0 - p)
    }
}

/// `Phi^-1(p)`: rational approximation followed by one Halley refinement
/// against the erfc-based CDF.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let x = rational_quantile(p);
    // Refine in the tail the residual is smallest in.
    let e = if p < 0.5 { normal_cdf(x) - p } else { (1.0 - p) - 0.5 * libm::erfc(x / SQRT_2) };
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// `c_ea . x_ea + c_sa . x_sa + c >= 0` required with probability `1 - epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineConstraint {
    pub c_ea: Vec3,
    pub c_sa: Vec3,
    pub c: f64,
    pub epsilon: f64,
}

/// Evaluated deterministic form of one chance constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMargin {
    pub sa_id: String,
    pub branch_id: usize,
    /// Prediction step, starting at 1.
    pub step: usize,
    pub lhs: f64,
    pub required: f64,
    pub satisfied: bool,
}

impl ConstraintMargin {
    pub fn slack(&self) -> f64 {
        self.lhs - self.required
    }
}

pub fn reformulate(ac: &AffineConstraint, x_ea: &Vec3, mean_sa: &Vec3, q_sa: &Mat3) -> Result<ConstraintMargin> {
    let lhs = ac.c_ea.dot(x_ea) + ac.c_sa.dot(mean_sa) + ac.c;
    let variance = (ac.c_sa.transpose() * q_sa * ac.c_sa)[0].max(0.0);
    let quantile = if ac.epsilon == 0.5 { 0.0 } else { inverse_normal_cdf(1.0 - ac.epsilon)? };
    let required = quantile * variance.sqrt();
    Ok(ConstraintMargin { sa_id: String::new(), branch_id: 0, step: 0, lhs, required, satisfied: lhs >= required })
}

const FD_STEP: f64 = 1e-5;

/// First-order surrogate of a nonlinear `h` around `(x_ea, nominal_sa)`,
/// with gradients from central differences.
pub fn linearize_surrogate<F>(h: F, x_ea: &Vec3, nominal_sa: &Vec3, epsilon: f64) -> Result<AffineConstraint>
where
    F: Fn(&Vec3, &Vec3) -> f64,
{
    let h0 = h(x_ea, nominal_sa);
    if !h0.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    let mut c_ea = Vec3::zeros();
    let mut c_sa = Vec3::zeros();
    for i in 0..3 {
        let mut e = Vec3::zeros();
        e[i] = FD_STEP;
        c_ea[i] = (h(&(x_ea + e), nominal_sa) - h(&(x_ea - e), nominal_sa)) / (2.0 * FD_STEP);
        c_sa[i] = (h(x_ea, &(nominal_sa + e)) - h(x_ea, &(nominal_sa - e))) / (2.0 * FD_STEP);
    }
    if !(c_ea.iter().chain(c_sa.iter()).all(|v| v.is_finite())) {
        return Err(Error::NonFiniteGradient);
    }
    let c = h0 - c_ea.dot(x_ea) - c_sa.dot(nominal_sa);
    Ok(AffineConstraint { c_ea, c_sa, c, epsilon })
}

/// Lead/follow constraint for nominal gap `mu = x_ego - x_sa`. A zero gap
/// is reported as a violation of both forms.
pub fn gap_constraint(mu: f64, d_safe: f64, epsilon: f64) -> AffineConstraint {
    let sign = if mu > 0.0 { 1.0 } else { -1.0 };
    AffineConstraint { c_ea: Vec3::new(sign, 0.0, 0.0), c_sa: Vec3::new(-sign, 0.0, 0.0), c: -d_safe, epsilon }
}

/// Safety margins of an ego plan against every same-lane branch step.
/// `ego_pred[j]` is the ego maneuver state and `[x, y, vx]` at step `j + 1`.
pub fn safety_constraints(
    ego_pred: &[(ManeuverState, Vec3)],
    reach: &[ReachabilitySet],
    d_safe: f64,
    epsilon: f64,
) -> Result<Vec<ConstraintMargin>> {
    let mut out = Vec::new();
    for set in reach {
        for (branch_id, branch) in set.branches.iter().enumerate() {
            for (j, (ego_state, x_ego)) in ego_pred.iter().enumerate().take(branch.states.len()) {
                if branch.states[j].lane != ego_state.lane {
                    continue;
                }
                let mean = branch.means[j].as_vec3();
                let mu = x_ego[0] - mean[0];
                let ac = gap_constraint(mu, d_safe, epsilon);
                let mut margin = reformulate(&ac, x_ego, &mean, &branch.covariances[j])?;
                if mu == 0.0 {
                    margin.satisfied = false;
                }
                margin.sa_id = set.agent_id.clone();
                margin.branch_id = branch_id;
                margin.step = j + 1;
                out.push(margin);
            }
        }
    }
    Ok(out)
}

/// Branch means and standard deviations grouped by step and lane, for fast
/// feasibility checks of many ego candidates against one reachability set.
#[derive(Debug, Clone)]
pub struct SafetyIndex {
    /// `entries[step][lane - 1]` holds `(mean_x, sigma_x)` pairs.
    entries: Vec<[Vec<(f64, f64)>; 3]>,
    d_safe: f64,
    quantile: f64,
}

impl SafetyIndex {
    pub fn new(reach: &[ReachabilitySet], horizon: usize, d_safe: f64, epsilon: f64) -> Result<Self> {
        let quantile = if epsilon == 0.5 { 0.0 } else { inverse_normal_cdf(1.0 - epsilon)? };
        let mut entries = vec![[Vec::new(), Vec::new(), Vec::new()]; horizon];
        for set in reach {
            for branch in &set.branches {
                for (j, slot) in entries.iter_mut().enumerate().take(branch.states.len()) {
                    let lane = branch.states[j].lane as usize - 1;
                    let sigma = branch.covariances[j][(0, 0)].max(0.0).sqrt();
                    slot[lane].push((branch.means[j].x, sigma));
                }
            }
        }
        Ok(Self { entries, d_safe, quantile })
    }

    /// Whether an ego vehicle intending `lane` at `step` (1-based) and
    /// longitudinal position `x` satisfies every activated constraint.
    pub fn is_safe(&self, step: usize, lane: u8, x: f64) -> bool {
        let Some(slot) = self.entries.get(step - 1) else { return true };
        slot[lane as usize - 1].iter().all(|&(mean, sigma)| {
            let mu = x - mean;
            mu != 0.0 && mu.abs() - self.d_safe >= self.quantile * sigma
        })
    }

    pub fn constraint_count(&self) -> usize {
        self.entries.iter().flat_map(|s| s.iter()).map(Vec::len).sum()
    }
}
