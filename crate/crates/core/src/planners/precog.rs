//! Sampling-based local planner that scores constant-command candidates
//! against forecast human motion. The cost mirrors the social terms of
//! the reward: goal progress, static safety margin, proximity pressure,
//! and discounted future-path blocking.

use serde::{Deserialize, Serialize};

use crate::math::{wrap_angle, Vec2};
use crate::params::{Action, WorldParams};
use crate::prediction::ForecastSet;
use crate::scene::{AgentState, Scene};

use super::astar::{lookahead_target, WaypointPath};

/// Linear speed fractions of v_max on the candidate lattice.
pub const LIN_FRACTIONS: [f64; 4] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
/// Angular rates on the lattice: this many, evenly spaced in [-ω_max, ω_max].
pub const N_ANGULAR: usize = 9;
/// Extra static clearance (m) the soft obstacle term asks for beyond the
/// robot radius. Hard penetration disqualifies a candidate outright.
pub const SAFETY_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecogConfig {
    pub w_goal: f64,
    pub w_obs: f64,
    pub w_prox: f64,
    pub w_traj: f64,
    /// Anticipatory blocking distance (m); looser than the reward's
    /// overlap threshold on purpose — the planner must steer away before
    /// paths actually cross.
    pub d_block: f64,
    /// Forecast length in steps.
    pub horizon: usize,
    pub forecast: ForecastSource,
}

impl Default for PrecogConfig {
    fn default() -> Self {
        PrecogConfig {
            w_goal: 1.0,
            w_obs: 10.0,
            w_prox: 0.3,
            w_traj: 1.0,
            d_block: 0.3,
            horizon: 8,
            forecast: ForecastSource::OrcaRollout,
        }
    }
}

/// Which oracle predicts human motion for planning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastSource {
    OrcaRollout,
    ConstantVelocity,
}

/// One lattice entry plus its kinematic rollout (no sliding: penetration
/// marks the candidate as statically colliding instead).
#[derive(Debug, Clone)]
pub struct ActionCandidate {
    pub linear: f64,
    pub angular: f64,
    pub rollout: Vec<Vec2>,
    pub collides: bool,
}

fn roll_candidate(
    robot: &AgentState,
    linear: f64,
    angular: f64,
    horizon: usize,
    scene: &Scene,
    params: &WorldParams,
) -> ActionCandidate {
    let mut pos = robot.position;
    let mut heading = robot.heading;
    let mut rollout = Vec::with_capacity(horizon);
    let mut collides = false;
    for _ in 0..horizon {
        heading = wrap_angle(heading + angular * params.dt);
        pos = pos + Vec2::from_angle(heading) * (linear * params.dt);
        if scene.static_clearance(pos) < robot.radius {
            collides = true;
        }
        rollout.push(pos);
    }
    ActionCandidate { linear, angular, rollout, collides }
}

/// Score one candidate. Lower is better.
fn score(
    cand: &ActionCandidate,
    start_remaining: f64,
    path: &WaypointPath,
    forecast: &ForecastSet,
    scene: &Scene,
    robot_radius: f64,
    cfg: &PrecogConfig,
    params: &WorldParams,
) -> f64 {
    let h = cand.rollout.len();
    // Progress shortfall against the best physically possible advance,
    // normalized by that advance so the term lives on a 0..~1 scale: a
    // full stop costs 1.0 regardless of the horizon.
    let span = h as f64 * params.dt * params.v_robot_max;
    let ideal = start_remaining - span;
    let goal_term =
        (path.remaining_from(*cand.rollout.last().expect("nonempty rollout")) - ideal) / span;

    let mut obs_term = 0.0;
    let mut prox_term = 0.0;
    let mut traj_term = 0.0;
    for (k, &p) in cand.rollout.iter().enumerate() {
        obs_term += (robot_radius + SAFETY_MARGIN - scene.static_clearance(p)).max(0.0);
        for (i, track) in forecast.positions.iter().enumerate() {
            if !forecast.mask[i] {
                continue;
            }
            let d = p.distance(track[k]);
            prox_term += (-d).exp();
            if d < cfg.d_block {
                traj_term += 1.0 / (k + 1) as f64;
            }
        }
    }
    cfg.w_goal * goal_term + cfg.w_obs * obs_term + cfg.w_prox * prox_term + cfg.w_traj * traj_term
}

/// Enumerate the lattice, roll each candidate out against the forecast,
/// return the first action of the cheapest non-colliding candidate. Ties
/// go to the smaller |angular|, then the smaller lattice index. When every
/// candidate hits a wall, turn in place toward the tracking target.
pub fn precog_plan(
    robot: &AgentState,
    forecast: &ForecastSet,
    path: &WaypointPath,
    scene: &Scene,
    cfg: &PrecogConfig,
    params: &WorldParams,
) -> Action {
    let candidates = candidate_lattice(robot, forecast.horizon, scene, params);
    let start_remaining = path.remaining_from(robot.position);
    let mut best: Option<(f64, f64, usize)> = None; // (J, |angular|, index)
    for (idx, cand) in candidates.iter().enumerate() {
        if cand.collides {
            continue;
        }
        let j = score(cand, start_remaining, path, forecast, scene, robot.radius, cfg, params);
        let key = (j, cand.angular.abs(), idx);
        let better = match best {
            None => true,
            Some(b) => (key.0, key.1, key.2) < b,
        };
        if better {
            best = Some(key);
        }
    }
    match best {
        Some((_, _, idx)) => Action::new(candidates[idx].linear, candidates[idx].angular),
        None => {
            let target = lookahead_target(path, robot.position);
            let err = wrap_angle((target - robot.position).angle() - robot.heading);
            let angular = if err >= 0.0 { params.omega_max } else { -params.omega_max };
            Action::new(0.0, angular)
        }
    }
}

/// The fixed 4 × 9 command lattice with rollouts attached.
pub fn candidate_lattice(
    robot: &AgentState,
    horizon: usize,
    scene: &Scene,
    params: &WorldParams,
) -> Vec<ActionCandidate> {
    let mut out = Vec::with_capacity(LIN_FRACTIONS.len() * N_ANGULAR);
    for &f in &LIN_FRACTIONS {
        for a in 0..N_ANGULAR {
            let angular =
                -params.omega_max + 2.0 * params.omega_max * a as f64 / (N_ANGULAR - 1) as f64;
            out.push(roll_candidate(robot, f * params.v_robot_max, angular, horizon, scene, params));
        }
    }
    out
}
