//! Scenario files: parsing, defaults, validation.
//!
//! Tuning fields are optional. When one is omitted the documented default
//! is filled in and recorded under `provenance` in the echoed
//! configuration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::{IdmParams, MobilParams};
use crate::error::{Error, Result};
use crate::hmdp::{parse_error, ManeuverState, ModeMix, Policy, TransitionTable};
use crate::planner::{CostTable, EvParams};
use crate::plant::VehicleParams;
use crate::predictor::{
    check_psd, enumerate_branches, AgentSnapshot, Mat3, PredictionParams, ReachabilitySet, SaContinuousState,
};

const CASE1: &str = include_str!("../scenarios/case1.json");
const CASE2: &str = include_str!("../scenarios/case2.json");
const CASE3: &str = include_str!("../scenarios/case3.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PlannerKind {
    #[default]
    #[serde(rename = "hmdp-mpc")]
    HmdpMpc,
    #[serde(rename = "idm-mobil")]
    IdmMobil,
}

impl PlannerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::HmdpMpc => "hmdp-mpc",
            Self::IdmMobil => "idm-mobil",
        }
    }
}

impl std::str::FromStr for PlannerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hmdp-mpc" => Ok(Self::HmdpMpc),
            "idm-mobil" => Ok(Self::IdmMobil),
            other => Err(Error::Validation(format!("unknown planner {other:?}"))),
        }
    }
}

/// Process noise given as a diagonal or as a full matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Diag([f64; 3]),
    Full([[f64; 3]; 3]),
}

impl NoiseSpec {
    pub fn matrix(&self) -> Mat3 {
        match self {
            Self::Diag(d) => Mat3::from_diagonal(&(*d).into()),
            Self::Full(m) => Mat3::from_fn(|i, j| m[i][j]),
        }
    }
}

/// Policy given either by independent lateral/longitudinal mixes or by
/// explicit rows keyed by state symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicySpec {
    Mix(ModeMix),
    Rows(BTreeMap<String, Vec<f64>>),
}

impl PolicySpec {
    pub fn build(&self, table: &TransitionTable) -> Result<Policy> {
        match self {
            Self::Mix(m) => Policy::from_mode_mix(m, table),
            Self::Rows(r) => Policy::from_row_map(r, table),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub t: f64,
    pub policy: PolicySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvInit {
    pub lane: u8,
    pub x0: f64,
    pub y0: f64,
    pub v0: f64,
    #[serde(default)]
    pub v_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    /// Desired speed of the rule-based driver; defaults to `v0`.
    #[serde(default)]
    pub v_desired: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvInit {
    pub id: String,
    pub lane: u8,
    pub x0: f64,
    pub y0: f64,
    pub v0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_limit: Option<f64>,
    pub schedule: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingConfig {
    pub kp_v: f64,
    pub omega_n: f64,
    pub zeta: f64,
    /// Apply planned acceleration and path curvature as feedforward.
    pub feedforward: bool,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self { kp_v: 1.0, omega_n: 1.5, zeta: 0.9, feedforward: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    t_sim: f64,
    t_l: f64,
    t_h: f64,
    horizon: usize,
    lane_width: f64,
    d_safe: f64,
    k1: f64,
    k2: f64,
    a_avg: f64,
    delta_seq: f64,
    cost_table: CostTable,
    ev: EvInit,
    svs: Vec<SvInit>,
    epsilon: Option<f64>,
    xi: Option<NoiseSpec>,
    lc_duration: Option<f64>,
    rng_seed: Option<u64>,
    planner: Option<PlannerKind>,
    modal_truth: Option<bool>,
    ev_forbidden_lanes: Option<Vec<u8>>,
    vehicle: Option<VehicleParams>,
    tracking: Option<TrackingConfig>,
    idm: Option<IdmParams>,
    mobil: Option<MobilParams>,
    sv_following: Option<bool>,
    model_mismatch: Option<f64>,
    vehicle_length: Option<f64>,
    epsilon_list: Option<Vec<f64>>,
    ideal_ev: Option<bool>,
    #[serde(rename = "provenance")]
    _provenance: Option<serde_json::Value>,
}

/// Validated scenario.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub t_sim: f64,
    pub t_l: f64,
    pub t_h: f64,
    pub horizon: usize,
    pub lane_width: f64,
    pub d_safe: f64,
    pub k1: f64,
    pub k2: f64,
    pub a_avg: f64,
    pub delta_seq: f64,
    pub cost_table: CostTable,
    pub ev: EvInit,
    pub svs: Vec<SvInit>,
    pub epsilon: f64,
    pub xi: NoiseSpec,
    pub lc_duration: f64,
    pub rng_seed: u64,
    pub planner: PlannerKind,
    pub modal_truth: bool,
    pub ev_forbidden_lanes: Vec<u8>,
    pub vehicle: VehicleParams,
    pub tracking: TrackingConfig,
    pub idm: IdmParams,
    pub mobil: MobilParams,
    /// Surrounding agents brake for a close leader in their lane.
    pub sv_following: bool,
    /// Factor on the nominal acceleration of surrounding-agent truth.
    pub model_mismatch: f64,
    pub vehicle_length: f64,
    pub epsilon_list: Vec<f64>,
    /// Advance the ego vehicle exactly along its prediction model.
    pub ideal_ev: bool,
    pub provenance: BTreeMap<String, String>,
    #[serde(skip)]
    policies: Vec<Vec<(f64, Policy)>>,
}

fn defaulted<T>(value: Option<T>, key: &str, default: T, note: &str, prov: &mut BTreeMap<String, String>) -> T {
    value.unwrap_or_else(|| {
        prov.insert(key.to_string(), note.to_string());
        default
    })
}

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let n = r.round();
    ((r - n).abs() <= 1e-9 * r.abs().max(1.0) && n >= 1.0).then_some(n as usize)
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str, source_name: &str) -> Result<Self> {
        let raw: RawScenario = serde_json::from_str(text).map_err(|e| parse_error(source_name, &e))?;
        Self::resolve(raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    /// Shipped scenarios: `case1`, `case2`, `case3`.
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "case1" => CASE1,
            "case2" => CASE2,
            "case3" => CASE3,
            other => return Err(Error::Validation(format!("no built-in scenario named {other:?}"))),
        };
        Self::from_json_str(text, &format!("{name}.json"))
    }

    /// Loads a file, or a built-in scenario when `spec` names one and no
    /// such file exists.
    pub fn load_or_builtin(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if path.exists() {
            return Self::load(path);
        }
        let stem = spec.strip_suffix(".json").unwrap_or(spec);
        let stem = stem.rsplit('/').next().unwrap_or(stem);
        match stem {
            "case1" | "case2" | "case3" => Self::builtin(stem),
            _ => Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("scenario file {spec} not found"),
            ))),
        }
    }

    fn resolve(raw: RawScenario) -> Result<Self> {
        let mut prov = BTreeMap::new();
        let p = &mut prov;
        let epsilon = defaulted(raw.epsilon, "epsilon", 0.05, "default risk level (assumed)", p);
        let xi = defaulted(raw.xi, "xi", NoiseSpec::Diag([0.05, 0.05, 0.01]), "default process noise (assumed)", p);
        let lc_duration = defaulted(raw.lc_duration, "lc_duration", 4.0 * raw.t_h, "four decision periods", p);
        let rng_seed = defaulted(raw.rng_seed, "rng_seed", 0, "default seed", p);
        let planner = raw.planner.unwrap_or_default();
        let modal_truth = raw.modal_truth.unwrap_or(false);
        let ev_forbidden_lanes = raw.ev_forbidden_lanes.unwrap_or_default();
        let vehicle =
            defaulted(raw.vehicle, "vehicle", VehicleParams::default(), "wheelbase 2.7 m, 4 m/s^2, 0.5 rad", p);
        let tracking =
            defaulted(raw.tracking, "tracking", TrackingConfig::default(), "substitute tracking controller", p);
        let v_desired = raw.ev.v_desired.unwrap_or(raw.ev.v0);
        let idm = defaulted(raw.idm, "idm", IdmParams::default(), "textbook IDM parameters", p).with_v0(v_desired);
        let mobil = defaulted(raw.mobil, "mobil", MobilParams::default(), "textbook MOBIL parameters", p);
        let sv_following = defaulted(raw.sv_following, "sv_following", true, "agents brake for close leaders", p);
        let model_mismatch = raw.model_mismatch.unwrap_or(1.0);
        let vehicle_length = defaulted(raw.vehicle_length, "vehicle_length", 4.5, "typical passenger car", p);
        let epsilon_list =
            defaulted(raw.epsilon_list, "epsilon_list", vec![0.01, 0.05, 0.1, 0.2, 0.3], "risk sweep (assumed)", p);
        let mut cfg = ScenarioConfig {
            name: raw.name,
            t_sim: raw.t_sim,
            t_l: raw.t_l,
            t_h: raw.t_h,
            horizon: raw.horizon,
            lane_width: raw.lane_width,
            d_safe: raw.d_safe,
            k1: raw.k1,
            k2: raw.k2,
            a_avg: raw.a_avg,
            delta_seq: raw.delta_seq,
            cost_table: raw.cost_table,
            ev: raw.ev,
            svs: raw.svs,
            epsilon,
            xi,
            lc_duration,
            rng_seed,
            planner,
            modal_truth,
            ev_forbidden_lanes,
            vehicle,
            tracking,
            idm,
            mobil,
            sv_following,
            model_mismatch,
            vehicle_length,
            epsilon_list,
            ideal_ev: raw.ideal_ev.unwrap_or(false),
            provenance: prov,
            policies: Vec::new(),
        };
        cfg.validate()?;
        let table = TransitionTable::three_lane();
        cfg.policies = cfg
            .svs
            .iter()
            .map(|sv| sv.schedule.iter().map(|e| Ok((e.t, e.policy.build(&table)?))).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        for (name, v) in [
            ("t_sim", self.t_sim),
            ("t_l", self.t_l),
            ("t_h", self.t_h),
            ("lane_width", self.lane_width),
            ("a_avg", self.a_avg),
            ("lc_duration", self.lc_duration),
            ("vehicle_length", self.vehicle_length),
            ("model_mismatch", self.model_mismatch),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if integer_ratio(self.t_h, self.t_l).is_none() {
            return fail(format!("t_h / t_l = {} / {} is not a positive integer", self.t_h, self.t_l));
        }
        if integer_ratio(self.lc_duration, self.t_h).is_none() {
            return fail(format!("lc_duration {} is not a whole number of decision periods", self.lc_duration));
        }
        if self.horizon == 0 {
            return fail("horizon must be at least 1".into());
        }
        if !(self.d_safe >= 0.0 && self.k1 >= 0.0 && self.k2 >= 0.0) {
            return fail("d_safe, k1 and k2 must be nonnegative".into());
        }
        for &e in std::iter::once(&self.epsilon).chain(&self.epsilon_list) {
            if !(e > 0.0 && e < 0.5) {
                return fail(format!("risk level {e} is outside (0, 0.5)"));
            }
        }
        if !(0.0..=1.0).contains(&self.delta_seq) {
            return fail(format!("delta_seq {} is outside [0, 1]", self.delta_seq));
        }
        check_psd(&self.xi.matrix()).map_err(|e| Error::Validation(format!("xi: {e}")))?;
        if !(1..=3).contains(&self.ev.lane) {
            return fail(format!("ego lane {} is outside 1..=3", self.ev.lane));
        }
        if self.ev_forbidden_lanes.contains(&self.ev.lane) {
            return fail("ego starts in a forbidden lane".into());
        }
        if self.ev.v_min > self.ev.v0 || self.ev.v0 > self.ev_v_max() {
            return fail("ego initial speed is outside [v_min, v_max]".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for sv in &self.svs {
            if !ids.insert(sv.id.as_str()) || sv.id == "EV" {
                return fail(format!("duplicate or reserved agent id {:?}", sv.id));
            }
            if !(1..=3).contains(&sv.lane) {
                return fail(format!("{}: lane {} is outside 1..=3", sv.id, sv.lane));
            }
            let Some(first) = sv.schedule.first() else {
                return fail(format!("{}: empty policy schedule", sv.id));
            };
            if first.t != 0.0 {
                return fail(format!("{}: policy schedule must start at t = 0", sv.id));
            }
            if sv.schedule.windows(2).any(|w| w[1].t <= w[0].t) {
                return fail(format!("{}: policy switch times must increase", sv.id));
            }
        }
        Ok(())
    }

    pub fn ticks_per_decision(&self) -> usize {
        integer_ratio(self.t_h, self.t_l).expect("validated")
    }

    pub fn decision_count(&self) -> usize {
        (self.t_sim / self.t_h + 1e-9).floor() as usize
    }

    /// Policy of agent `index` in force at time `t`.
    pub fn policy_at(&self, index: usize, t: f64) -> &Policy {
        let schedule = &self.policies[index];
        let i = schedule.partition_point(|(ts, _)| *ts <= t + 1e-9);
        &schedule[i.max(1) - 1].1
    }

    pub fn sv_index(&self, id: &str) -> Result<usize> {
        self.svs.iter().position(|s| s.id == id).ok_or_else(|| Error::UnknownAgent(id.to_string()))
    }

    /// Reachability set of agent `id` from its initial state, under the
    /// policy scheduled at time zero.
    pub fn predict_agent(&self, id: &str, horizon: usize) -> Result<ReachabilitySet> {
        let index = self.sv_index(id)?;
        let sv = &self.svs[index];
        let state = ManeuverState::new(sv.lane, 0)
            .ok_or_else(|| Error::Validation(format!("agent {id} starts in invalid lane {}", sv.lane)))?;
        let snap = AgentSnapshot {
            state,
            cont: SaContinuousState::new(sv.x0, sv.y0, sv.v0),
            covariance: Mat3::zeros(),
            policy: self.policy_at(index, 0.0),
        };
        enumerate_branches(id, &snap, &self.sv_table(), &self.prediction_params(), horizon, self.delta_seq)
    }

    pub fn sv_table(&self) -> TransitionTable {
        TransitionTable::three_lane()
    }

    pub fn ev_table(&self) -> TransitionTable {
        self.ev_forbidden_lanes.iter().fold(TransitionTable::three_lane(), |t, &lane| t.without_entering_lane(lane))
    }

    pub fn prediction_params(&self) -> PredictionParams {
        PredictionParams::new(self.t_h, self.k1, self.k2, self.a_avg, self.lane_width, self.xi.matrix())
    }

    pub fn ev_params(&self) -> EvParams {
        self.ev_params_with(self.epsilon)
    }

    pub fn ev_params_with(&self, epsilon: f64) -> EvParams {
        EvParams {
            t_h: self.t_h,
            horizon: self.horizon,
            a_avg: self.a_avg,
            lane_width: self.lane_width,
            lc_duration: self.lc_duration,
            d_safe: self.d_safe,
            epsilon,
            v_min: self.ev.v_min,
            v_max: self.ev_v_max(),
        }
    }

    pub fn ev_v_max(&self) -> f64 {
        self.ev.v_max.unwrap_or(f64::INFINITY)
    }

    pub fn ev_initial_state(&self) -> ManeuverState {
        ManeuverState::new(self.ev.lane, 0).expect("validated lane")
    }

    /// Echo of the resolved configuration, including provenance notes.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("scenario serializes")
    }
}
