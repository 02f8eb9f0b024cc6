//! Ground-truth motion: kinematic bicycle for the ego vehicle, a saturated
//! proportional tracker, and noisy affine motion for surrounding agents.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::predictor::{propagate_mean, Mat3, ModeDynamics, SaContinuousState, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicycleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
}

impl BicycleState {
    pub fn new(x: f64, y: f64, v: f64) -> Self {
        Self { x, y, psi: 0.0, v }
    }

    pub fn vx(&self) -> f64 {
        self.v * self.psi.cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingCommand {
    pub accel: f64,
    pub steer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub a_max: f64,
    pub steer_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self { wheelbase: 2.7, a_max: 4.0, steer_max: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingGains {
    pub kp_v: f64,
    pub kp_y: f64,
    pub kd_y: f64,
}

impl TrackingGains {
    /// Lateral gains that give the small-angle closed loop
    /// `y'' + 2 zeta wn y' + wn^2 y = 0` at speed `v`.
    pub fn scheduled(kp_v: f64, v: f64, wheelbase: f64, omega_n: f64, zeta: f64) -> Self {
        let v2 = v.max(1.0).powi(2);
        Self { kp_v, kp_y: wheelbase * omega_n * omega_n / v2, kd_y: wheelbase * 2.0 * zeta * omega_n / v2 }
    }
}

/// Reference handed to the tracker. The feedforward terms are optional
/// and zero for a pure feedback law.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingReference {
    pub y_ref: f64,
    pub v_ref: f64,
    pub accel_ff: f64,
    pub steer_ff: f64,
}

pub fn bicycle_step(s: &BicycleState, u: &TrackingCommand, t_l: f64, wheelbase: f64) -> BicycleState {
    BicycleState {
        x: s.x + s.v * s.psi.cos() * t_l,
        y: s.y + s.v * s.psi.sin() * t_l,
        psi: s.psi + s.v / wheelbase * u.steer.tan() * t_l,
        v: (s.v + u.accel * t_l).max(0.0),
    }
}

pub fn track(s: &BicycleState, r: &TrackingReference, g: &TrackingGains, vp: &VehicleParams) -> TrackingCommand {
    let accel = g.kp_v * (r.v_ref - s.v) + r.accel_ff;
    let steer = g.kp_y * (r.y_ref - s.y) - g.kd_y * s.v * s.psi.sin() + r.steer_ff;
    TrackingCommand { accel: accel.clamp(-vp.a_max, vp.a_max), steer: steer.clamp(-vp.steer_max, vp.steer_max) }
}

/// Draws `N(0, Xi)` samples through the eigendecomposition of `Xi`, which
/// also handles singular noise covariances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianNoise {
    factor: Mat3,
}

impl GaussianNoise {
    pub fn new(xi: &Mat3) -> Self {
        let eig = SymmetricEigen::new(0.5 * (xi + xi.transpose()));
        let scale = Mat3::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        Self { factor: eig.eigenvectors * scale }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let z = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        self.factor * z
    }
}

/// One decision period of surrounding-agent truth: `A x + B F + w`.
pub fn sv_step_truth<R: Rng + ?Sized>(
    x: &SaContinuousState,
    d: &ModeDynamics,
    noise: &GaussianNoise,
    rng: &mut R,
) -> SaContinuousState {
    let mean = propagate_mean(x, d);
    let w = noise.sample(rng);
    SaContinuousState { x: mean.x + w[0], y: mean.y + w[1], vx: mean.vx + w[2], vy: mean.vy }
}
