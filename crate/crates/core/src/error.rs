use thiserror::Error;

use crate::hmdp::{ManeuverAction, ManeuverState};

/// Errors raised by the planning stack and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("action {action} is infeasible in state {state}")]
    InfeasibleTransition { state: ManeuverState, action: ManeuverAction },

    #[error("lateral action {action} would abort the lane change in flight")]
    LaneChangeInFlight { action: ManeuverAction },

    #[error("invalid policy for {state}: {reason}")]
    InvalidPolicy { state: ManeuverState, reason: String },

    #[error("invalid transition table: {0}")]
    InvalidTable(String),

    #[error("covariance is not symmetric positive semidefinite (min eigenvalue {min_eigenvalue:.3e}, asymmetry {asymmetry:.3e})")]
    NonPsdInput { min_eigenvalue: f64, asymmetry: f64 },

    #[error("no action sequence of agent {agent} survives the cumulative probability threshold {threshold}")]
    EmptyScenarioTree { agent: String, threshold: f64 },

    #[error("probability {0} is outside the open interval (0, 1)")]
    Domain(f64),

    #[error("gradient of the constraint function is not finite at the nominal point")]
    NonFiniteGradient,

    #[error("no candidate action sequence satisfies every safety constraint ({candidates} candidates checked)")]
    NoFeasibleSequence { candidates: usize },

    #[error("invalid cost table: {0}")]
    InvalidCostTable(String),

    #[error("parse error in {source_name} at line {line}, column {column}: {message}")]
    Parse { source_name: String, line: usize, column: usize, message: String },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("unknown agent id {0:?}")]
    UnknownAgent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
