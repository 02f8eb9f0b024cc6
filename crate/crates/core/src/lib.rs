//! Hierarchical maneuver planning under maneuver-level and dynamic-level
//! uncertainty.
//!
//! Surrounding agents are hybrid MDPs: a stochastic policy picks discrete
//! maneuvers and each maneuver drives affine Gaussian dynamics. Their
//! retained action sequences form a reachability set, which the ego
//! planner turns into deterministic chance constraints while it searches
//! its own discrete maneuver sequences.

pub mod baseline;
pub mod chance;
pub mod error;
pub mod hmdp;
pub mod metrics;
pub mod planner;
pub mod plant;
pub mod predictor;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use hmdp::{ManeuverAction, ManeuverState, Policy, TransitionTable};
