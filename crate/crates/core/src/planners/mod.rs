//! Non-learned controllers: grid A* with waypoint following, a reactive
//! velocity-obstacle policy, and a forecast-aware local planner.

mod astar;
mod controllers;
mod orca_policy;
mod precog;

pub use astar::{
    astar_plan, line_of_sight, lookahead_target, steer_toward, waypoint_follow, WaypointPath,
    LOOKAHEAD,
};
pub use controllers::{AstarController, OrcaController, PrecogController, REPLAN_DRIFT};
pub use orca_policy::orca_robot_policy;
pub use precog::{
    candidate_lattice, precog_plan, ActionCandidate, ForecastSource, PrecogConfig, LIN_FRACTIONS,
    N_ANGULAR, SAFETY_MARGIN,
};
