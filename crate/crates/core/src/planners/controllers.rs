//! `Controller` adapters around the rule-based planners, holding the one
//! piece of persistent state they are allowed: the waypoint path.

use crate::episode::{ControlView, Controller, ControllerFault, Episode};
use crate::prediction::{constant_velocity_forecast, orca_rollout_forecast};
use crate::scene::Scene;

use super::astar::{astar_plan, waypoint_follow, WaypointPath};
use super::orca_policy::orca_robot_policy;
use super::precog::{precog_plan, ForecastSource, PrecogConfig};

/// Replan once the robot drifts this far (m) off its path. The shortest-path
/// baseline deliberately never replans; avoidance controllers do, since
/// dodging can strand them away from the original line.
pub const REPLAN_DRIFT: f64 = 1.0;

fn need_path<'p>(path: &'p Option<WaypointPath>) -> Result<&'p WaypointPath, ControllerFault> {
    path.as_ref().ok_or_else(|| ControllerFault("no feasible path to the goal".into()))
}

/// Shortest-path tracking, blind to humans.
#[derive(Default)]
pub struct AstarController {
    path: Option<WaypointPath>,
}

impl Controller for AstarController {
    fn begin(&mut self, _episode: &Episode, _scene: &Scene) {
        self.path = None;
    }
    fn act(&mut self, view: &ControlView) -> Result<crate::params::Action, ControllerFault> {
        if self.path.is_none() {
            self.path =
                astar_plan(view.scene, view.robot.position, view.goal, view.params.robot_radius);
        }
        let path = need_path(&self.path)?;
        Ok(waypoint_follow(path, view.robot, view.params))
    }
}

/// Waypoint tracking with reciprocal velocity-obstacle avoidance.
#[derive(Default)]
pub struct OrcaController {
    path: Option<WaypointPath>,
}

impl Controller for OrcaController {
    fn begin(&mut self, _episode: &Episode, _scene: &Scene) {
        self.path = None;
    }
    fn act(&mut self, view: &ControlView) -> Result<crate::params::Action, ControllerFault> {
        let stale = match &self.path {
            Some(p) => p.distance_to(view.robot.position) > REPLAN_DRIFT,
            None => true,
        };
        if stale {
            self.path =
                astar_plan(view.scene, view.robot.position, view.goal, view.params.robot_radius);
        }
        let path = need_path(&self.path)?;
        let humans: Vec<_> = view.humans.iter().map(|h| (h.id, h.state)).collect();
        Ok(orca_robot_policy(view.robot, &humans, path, view.params))
    }
}

/// Forecast-scoring planner: rolls a command lattice against predicted
/// human motion every step.
pub struct PrecogController {
    pub cfg: PrecogConfig,
    path: Option<WaypointPath>,
}

impl PrecogController {
    pub fn new(cfg: PrecogConfig) -> Self {
        PrecogController { cfg, path: None }
    }
}

impl Controller for PrecogController {
    fn begin(&mut self, _episode: &Episode, _scene: &Scene) {
        self.path = None;
    }
    fn act(&mut self, view: &ControlView) -> Result<crate::params::Action, ControllerFault> {
        let stale = match &self.path {
            Some(p) => p.distance_to(view.robot.position) > REPLAN_DRIFT,
            None => true,
        };
        if stale {
            self.path =
                astar_plan(view.scene, view.robot.position, view.goal, view.params.robot_radius);
        }
        let path = need_path(&self.path)?;
        let forecast = match self.cfg.forecast {
            ForecastSource::OrcaRollout => orca_rollout_forecast(
                view.humans,
                view.robot,
                view.scene,
                view.crowd_rng,
                self.cfg.horizon,
                view.params,
            ),
            ForecastSource::ConstantVelocity => {
                let states: Vec<_> = view.humans.iter().map(|h| h.state).collect();
                constant_velocity_forecast(&states, view.scene, self.cfg.horizon, view.params.dt)
            }
        };
        Ok(precog_plan(view.robot, &forecast, path, view.scene, &self.cfg, view.params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{run_episode, Outcome};
    use crate::gen::generate_episode;
    use crate::params::WorldParams;
    use crate::rewards::RewardConfig;
    use crate::rng::indexed_stream;

    #[test]
    fn every_rule_based_controller_solves_an_open_task() {
        let params = WorldParams::default();
        let scene = Scene::empty_room("open", 12.0, 12.0, params.r_grid);
        let mut rng = indexed_stream(100, "episode", 0);
        let mut episode = generate_episode(&scene, 5, &mut rng, &params).unwrap();
        episode.humans.clear(); // isolate goal-reaching ability

        let rc = RewardConfig::default();
        let mut astar = AstarController::default();
        let mut orca = OrcaController::default();
        let mut precog = PrecogController::new(PrecogConfig::default());
        let controllers: [(&str, &mut dyn crate::episode::Controller); 3] =
            [("astar", &mut astar), ("orca", &mut orca), ("precog", &mut precog)];
        for (name, ctrl) in controllers {
            let trace = run_episode(&scene, &episode, ctrl, &rc, &params, false);
            assert_eq!(trace.outcome, Outcome::Success, "{name} failed the open task");
        }
    }
}
