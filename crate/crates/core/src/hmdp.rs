//! Discrete maneuver layer shared by the ego vehicle and surrounding agents.
//!
//! A maneuver state is a pair (target lane, longitudinal phase) and a maneuver
//! action is a pair (lateral, longitudinal) increment. Lanes are numbered
//! 1..=3 from left to right. The nine states and nine actions are indexed
//! `s1..s9` / `a1..a9` in the canonical order:
//!
//! ```text
//! a1 (0, 0)   a2 (0, +1)   a3 (0, -1)
//! a4 (-1, 0)  a5 (-1, +1)  a6 (-1, -1)
//! a7 (+1, 0)  a8 (+1, +1)  a9 (+1, -1)
//!
//! s1 (1, 0)   s2 (1, +1)   s3 (1, -1)
//! s4 (2, 0)   s5 (2, +1)   s6 (2, -1)
//! s7 (3, 0)   s8 (3, +1)   s9 (3, -1)
//! ```
//!
//! Transitions are deterministic and stored as data in a [`TransitionTable`];
//! policies assign probabilities to the admissible actions of every state.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const NUM_LANES: u8 = 3;
pub const NUM_STATES: usize = 9;
pub const NUM_ACTIONS: usize = 9;

/// Longitudinal component in canonical index order: cruise, accelerate, decelerate.
const LONG_ORDER: [i8; 3] = [0, 1, -1];
/// Lateral component in canonical index order: keep, left, right.
const LAT_ORDER: [i8; 3] = [0, -1, 1];

fn long_slot(long: i8) -> usize {
    match long {
        0 => 0,
        1 => 1,
        _ => 2,
    }
}

/// Discrete action: lateral in {-1 left, 0 keep, +1 right}, longitudinal in
/// {-1 decelerate, 0 cruise, +1 accelerate}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ManeuverAction {
    pub lat: i8,
    pub long: i8,
}

impl ManeuverAction {
    pub const KEEP_CRUISE: ManeuverAction = ManeuverAction { lat: 0, long: 0 };

    pub const ALL: [ManeuverAction; NUM_ACTIONS] = {
        let mut out = [ManeuverAction { lat: 0, long: 0 }; NUM_ACTIONS];
        let mut i = 0;
        while i < NUM_ACTIONS {
            out[i] = ManeuverAction { lat: LAT_ORDER[i / 3], long: LONG_ORDER[i % 3] };
            i += 1;
        }
        out
    };

    pub fn new(lat: i8, long: i8) -> Option<Self> {
        ((-1..=1).contains(&lat) && (-1..=1).contains(&long)).then_some(Self { lat, long })
    }

    /// Zero-based index; `a1` is 0.
    pub fn index(self) -> usize {
        let lat = match self.lat {
            0 => 0,
            -1 => 1,
            _ => 2,
        };
        lat * 3 + long_slot(self.long)
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

impl fmt::Display for ManeuverAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.index() + 1)
    }
}

/// Discrete maneuver state: intended lane and longitudinal phase.
///
/// Encodes intent, not the physical position: a vehicle in the middle of a
/// lane change already carries the target lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ManeuverState {
    pub lane: u8,
    pub long: i8,
}

impl ManeuverState {
    pub const ALL: [ManeuverState; NUM_STATES] = {
        let mut out = [ManeuverState { lane: 1, long: 0 }; NUM_STATES];
        let mut i = 0;
        while i < NUM_STATES {
            out[i] = ManeuverState { lane: (i / 3) as u8 + 1, long: LONG_ORDER[i % 3] };
            i += 1;
        }
        out
    };

    pub fn new(lane: u8, long: i8) -> Option<Self> {
        ((1..=NUM_LANES).contains(&lane) && (-1..=1).contains(&long)).then_some(Self { lane, long })
    }

    /// Zero-based index; `s1` is 0.
    pub fn index(self) -> usize {
        (self.lane as usize - 1) * 3 + long_slot(self.long)
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Cruise phase in any lane.
    pub fn is_goal(self) -> bool {
        self.long == 0
    }
}

impl fmt::Display for ManeuverState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.index() + 1)
    }
}

fn parse_symbol(s: &str, prefix: char) -> Option<usize> {
    let rest = s.strip_prefix(prefix)?;
    let n: usize = rest.parse().ok()?;
    (1..=9).contains(&n).then(|| n - 1)
}

impl FromStr for ManeuverState {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        parse_symbol(s, 's').and_then(Self::from_index).ok_or_else(|| format!("unknown maneuver state {s:?}"))
    }
}

impl FromStr for ManeuverAction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        parse_symbol(s, 'a').and_then(Self::from_index).ok_or_else(|| format!("unknown maneuver action {s:?}"))
    }
}

macro_rules! symbol_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

symbol_serde!(ManeuverState);
symbol_serde!(ManeuverAction);

/// Successor of each (state, action) pair, `None` where the transition is
/// infeasible. Rows are states `s1..s9`, columns are actions `a1..a9`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionTable {
    cells: [[Option<ManeuverState>; NUM_ACTIONS]; NUM_STATES],
}

/// Three-lane highway successor table, 1-based state numbers, 0 for infeasible.
const THREE_LANE_TABLE: [[u8; NUM_ACTIONS]; NUM_STATES] = [
    [1, 2, 3, 0, 0, 0, 4, 5, 6],
    [2, 0, 1, 0, 0, 0, 5, 0, 4],
    [3, 1, 0, 0, 0, 0, 6, 4, 0],
    [4, 5, 6, 1, 2, 3, 7, 8, 9],
    [5, 0, 4, 2, 0, 1, 8, 0, 7],
    [6, 4, 0, 3, 1, 0, 9, 7, 0],
    [7, 8, 9, 4, 5, 6, 0, 0, 0],
    [8, 0, 7, 5, 0, 4, 0, 0, 0],
    [9, 7, 0, 6, 4, 0, 0, 0, 0],
];

impl Default for TransitionTable {
    fn default() -> Self {
        Self::three_lane()
    }
}

impl TransitionTable {
    /// The shipped three-lane table.
    pub fn three_lane() -> Self {
        let mut cells = [[None; NUM_ACTIONS]; NUM_STATES];
        for (row, entries) in THREE_LANE_TABLE.iter().enumerate() {
            for (col, &next) in entries.iter().enumerate() {
                if next > 0 {
                    cells[row][col] = ManeuverState::from_index(next as usize - 1);
                }
            }
        }
        Self { cells }
    }

    /// A table in which every transition is infeasible.
    pub fn empty() -> Self {
        Self { cells: [[None; NUM_ACTIONS]; NUM_STATES] }
    }

    pub fn get(&self, s: ManeuverState, a: ManeuverAction) -> Option<ManeuverState> {
        self.cells[s.index()][a.index()]
    }

    pub fn set(&mut self, s: ManeuverState, a: ManeuverAction, next: Option<ManeuverState>) {
        self.cells[s.index()][a.index()] = next;
    }

    /// Copy of this table with every transition whose successor lies in
    /// `lane` removed, except the self-loops of states already in that lane.
    pub fn without_entering_lane(&self, lane: u8) -> Self {
        let mut out = self.clone();
        for s in ManeuverState::ALL {
            for a in ManeuverAction::ALL {
                if let Some(next) = self.get(s, a) {
                    if next.lane == lane && s.lane != lane {
                        out.set(s, a, None);
                    }
                }
            }
        }
        out
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let rows: BTreeMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| parse_error("transition table", &e))?;
        let mut table = Self::empty();
        let mut seen = [false; NUM_STATES];
        for (key, row) in rows {
            let s: ManeuverState = key.parse().map_err(Error::InvalidTable)?;
            if row.len() != NUM_ACTIONS {
                return Err(Error::InvalidTable(format!(
                    "row {key} has {} entries, expected {NUM_ACTIONS}",
                    row.len()
                )));
            }
            for (col, cell) in row.iter().enumerate() {
                let next = match cell.trim() {
                    "/" => None,
                    other => Some(other.parse().map_err(Error::InvalidTable)?),
                };
                table.cells[s.index()][col] = next;
            }
            seen[s.index()] = true;
        }
        if let Some(missing) = seen.iter().position(|&v| !v) {
            return Err(Error::InvalidTable(format!("missing row s{}", missing + 1)));
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for s in ManeuverState::ALL {
            let row: Vec<String> = ManeuverAction::ALL
                .iter()
                .map(|&a| self.get(s, a).map_or_else(|| "/".to_string(), |n| n.to_string()))
                .collect();
            map.insert(s.to_string(), row.into());
        }
        serde_json::Value::Object(map)
    }
}

impl Serialize for TransitionTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransitionTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        Self::from_json_str(&value.to_string()).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn parse_error(source_name: &str, e: &serde_json::Error) -> Error {
    Error::Parse { source_name: source_name.to_string(), line: e.line(), column: e.column(), message: e.to_string() }
}

/// Actions whose table entry is not infeasible, in canonical order.
pub fn admissible_actions(s: ManeuverState, table: &TransitionTable) -> Vec<ManeuverAction> {
    ManeuverAction::ALL.into_iter().filter(|&a| table.get(s, a).is_some()).collect()
}

pub fn transition(s: ManeuverState, a: ManeuverAction, table: &TransitionTable) -> Result<ManeuverState> {
    table.get(s, a).ok_or(Error::InfeasibleTransition { state: s, action: a })
}

/// Stochastic maneuver policy: one probability row over `a1..a9` per state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    rows: [[f64; NUM_ACTIONS]; NUM_STATES],
}

const POLICY_SUM_TOL: f64 = 1e-9;

impl Policy {
    /// Validates every row against `table`: nonnegative, summing to one, and
    /// zero on infeasible actions.
    pub fn new(rows: [[f64; NUM_ACTIONS]; NUM_STATES], table: &TransitionTable) -> Result<Self> {
        for s in ManeuverState::ALL {
            let row = &rows[s.index()];
            let mut sum = 0.0;
            for a in ManeuverAction::ALL {
                let p = row[a.index()];
                if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                    return Err(Error::InvalidPolicy { state: s, reason: format!("probability of {a} is {p}") });
                }
                if p > 0.0 && table.get(s, a).is_none() {
                    return Err(Error::InvalidPolicy {
                        state: s,
                        reason: format!("infeasible action {a} has probability {p}"),
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > POLICY_SUM_TOL {
                return Err(Error::InvalidPolicy { state: s, reason: format!("row sums to {sum}") });
            }
        }
        Ok(Self { rows })
    }

    /// Every state keeps its current maneuver (`a1`) with probability one.
    pub fn hold() -> Self {
        let mut rows = [[0.0; NUM_ACTIONS]; NUM_STATES];
        for row in rows.iter_mut() {
            row[0] = 1.0;
        }
        Self { rows }
    }

    /// Builds a policy from independent lateral and longitudinal target-mode
    /// probabilities. Lateral targets that leave the road fall back to lane
    /// keeping; longitudinal targets two phases away are reached through the
    /// intermediate phase.
    pub fn from_mode_mix(mix: &ModeMix, table: &TransitionTable) -> Result<Self> {
        let lat = [(0i8, mix.lateral.keep), (-1, mix.lateral.left), (1, mix.lateral.right)];
        let long =
            [(0i8, mix.longitudinal.cruise), (1, mix.longitudinal.accelerate), (-1, mix.longitudinal.decelerate)];
        let mut rows = [[0.0; NUM_ACTIONS]; NUM_STATES];
        for s in ManeuverState::ALL {
            for &(dlat, pl) in &lat {
                let lane = s.lane as i8 + dlat;
                let dlat = if (1..=NUM_LANES as i8).contains(&lane) { dlat } else { 0 };
                for &(target, pm) in &long {
                    let dlong = (target - s.long).clamp(-1, 1);
                    let a = ManeuverAction { lat: dlat, long: dlong };
                    rows[s.index()][a.index()] += pl * pm;
                }
            }
        }
        Self::new(rows, table)
    }

    pub fn prob(&self, s: ManeuverState, a: ManeuverAction) -> f64 {
        self.rows[s.index()][a.index()]
    }

    pub fn row(&self, s: ManeuverState) -> &[f64; NUM_ACTIONS] {
        &self.rows[s.index()]
    }

    /// Most probable action; ties resolve to the lowest action index.
    pub fn modal_action(&self, s: ManeuverState) -> ManeuverAction {
        let row = self.row(s);
        let mut best = 0;
        for i in 1..NUM_ACTIONS {
            if row[i] > row[best] {
                best = i;
            }
        }
        ManeuverAction::ALL[best]
    }

    /// Parses `{"s1": [p1, ..., p9], ...}`. Missing states hold their
    /// current maneuver.
    pub fn from_json_str(text: &str, table: &TransitionTable) -> Result<Self> {
        let rows: BTreeMap<String, Vec<f64>> = serde_json::from_str(text).map_err(|e| parse_error("policy", &e))?;
        Self::from_row_map(&rows, table)
    }

    pub fn from_row_map(rows: &BTreeMap<String, Vec<f64>>, table: &TransitionTable) -> Result<Self> {
        let mut out = Self::hold().rows;
        for (key, row) in rows {
            let s: ManeuverState = key.parse().map_err(|e: String| Error::Validation(e))?;
            if row.len() != NUM_ACTIONS {
                return Err(Error::InvalidPolicy {
                    state: s,
                    reason: format!("row has {} entries, expected {NUM_ACTIONS}", row.len()),
                });
            }
            out[s.index()].copy_from_slice(row);
        }
        Self::new(out, table)
    }

    pub fn load(path: impl AsRef<Path>, table: &TransitionTable) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?, table)
    }

    pub fn to_row_map(&self) -> BTreeMap<String, Vec<f64>> {
        ManeuverState::ALL.iter().map(|s| (s.to_string(), self.row(*s).to_vec())).collect()
    }
}

/// Target-mode probabilities used by [`Policy::from_mode_mix`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeMix {
    pub lateral: LateralMix,
    pub longitudinal: LongitudinalMix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LateralMix {
    pub keep: f64,
    pub left: f64,
    pub right: f64,
}

impl Default for LateralMix {
    fn default() -> Self {
        Self { keep: 1.0, left: 0.0, right: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LongitudinalMix {
    pub cruise: f64,
    pub accelerate: f64,
    pub decelerate: f64,
}

impl Default for LongitudinalMix {
    fn default() -> Self {
        Self { cruise: 1.0, accelerate: 0.0, decelerate: 0.0 }
    }
}

/// Actions with positive probability at least `delta` (ties retained).
pub fn filter_actions(s: ManeuverState, policy: &Policy, delta: f64) -> Vec<ManeuverAction> {
    ManeuverAction::ALL
        .into_iter()
        .filter(|&a| {
            let p = policy.prob(s, a);
            p > 0.0 && p >= delta
        })
        .collect()
}
