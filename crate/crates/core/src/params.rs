//! Shared simulation parameters and the robot command type.

use serde::{Deserialize, Serialize};

/// Robot command: forward speed (m/s) and turn rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub linear: f64,
    pub angular: f64,
}

impl Action {
    pub const STOP: Action = Action { linear: 0.0, angular: 0.0 };

    pub fn new(linear: f64, angular: f64) -> Self {
        Action { linear, angular }
    }

    /// Clamp into the robot's command envelope. Returns the clamped action
    /// and whether anything changed.
    pub fn clamped(self, v_max: f64, omega_max: f64) -> (Action, bool) {
        let a = Action {
            linear: self.linear.clamp(-v_max, v_max),
            angular: self.angular.clamp(-omega_max, omega_max),
        };
        (a, a != self)
    }
}

/// Depth sensor geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorParams {
    pub n_rays: usize,
    pub fov: f64,
    pub d_max: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        SensorParams { n_rays: 64, fov: std::f64::consts::FRAC_PI_2, d_max: 5.0 }
    }
}

/// Reciprocal collision-avoidance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrcaParams {
    /// Time horizon (s) over which agents guarantee mutual avoidance.
    pub tau: f64,
    /// Sensing range (m): agents beyond it impose no constraint.
    pub d_neighbor: f64,
    /// At most this many nearest neighbors are considered.
    pub max_neighbors: usize,
}

impl Default for OrcaParams {
    fn default() -> Self {
        OrcaParams { tau: 2.0, d_neighbor: 5.0, max_neighbors: 10 }
    }
}

/// World-level constants: control rate, kinematic limits, radii, episode
/// budget, raster resolution, sensing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    pub dt: f64,
    pub v_robot_max: f64,
    pub omega_max: f64,
    pub max_steps: usize,
    pub robot_radius: f64,
    pub human_radius: f64,
    /// Success radius around the goal (m).
    pub d_succ: f64,
    pub r_grid: f64,
    pub sensor: SensorParams,
    pub orca: OrcaParams,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            dt: 0.25,
            v_robot_max: 1.0,
            omega_max: std::f64::consts::PI,
            max_steps: 500,
            robot_radius: 0.25,
            human_radius: 0.3,
            d_succ: 0.25,
            r_grid: 0.1,
            sensor: SensorParams::default(),
            orca: OrcaParams::default(),
        }
    }
}

impl WorldParams {
    /// Robot-human center distance below which a collision is counted.
    pub fn collision_distance(&self) -> f64 {
        self.robot_radius + self.human_radius
    }
}
