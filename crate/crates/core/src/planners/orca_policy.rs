//! Robot controller that tracks the waypoint path but resolves its
//! commanded velocity through the same reciprocal velocity-obstacle
//! program the crowd uses, with oracle access to human states.

use crate::crowd::{orca_halfplanes, solve_velocity_program};
use crate::math::{wrap_angle, Vec2};
use crate::params::{Action, WorldParams};
use crate::prediction::ROBOT_ID;
use crate::scene::AgentState;

use super::astar::{lookahead_target, steer_toward, waypoint_follow, WaypointPath};

/// Waypoint tracking filtered through human-avoidance constraints. With no
/// human inside the neighbor radius this is exactly `waypoint_follow`.
pub fn orca_robot_policy(
    robot: &AgentState,
    humans: &[(usize, AgentState)],
    path: &WaypointPath,
    params: &WorldParams,
) -> Action {
    let o = params.orca;
    let constraints = orca_halfplanes(
        ROBOT_ID,
        robot,
        humans,
        o.tau,
        o.d_neighbor,
        o.max_neighbors,
        params.dt,
    );
    if constraints.is_empty() {
        return waypoint_follow(path, robot, params);
    }
    // Preferred velocity: the tracker's own command, expressed as a
    // velocity along the target bearing.
    let target = lookahead_target(path, robot.position);
    let base = steer_toward(target, robot, params);
    let dir = (target - robot.position).normalized_or_zero();
    let v_pref = dir * base.linear;
    let v = solve_velocity_program(&constraints, v_pref, params.v_robot_max);
    steer_velocity(v, robot, params)
}

/// Map a holonomic velocity onto the unicycle: turn toward it, scale the
/// forward speed by heading alignment.
fn steer_velocity(v: Vec2, robot: &AgentState, params: &WorldParams) -> Action {
    let speed = v.norm();
    if speed < 1e-9 {
        return Action::STOP;
    }
    let err = wrap_angle(v.angle() - robot.heading);
    let angular = (err / params.dt).clamp(-params.omega_max, params.omega_max);
    let linear = (speed * err.cos().max(0.0)).min(params.v_robot_max);
    Action::new(linear, angular)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planners::astar_plan;
    use crate::scene::Scene;

    #[test]
    fn empty_and_distant_crowds_leave_tracking_untouched() {
        let scene = Scene::empty_room("t", 20.0, 20.0, 0.1);
        let params = WorldParams::default();
        let robot = AgentState::at_rest(Vec2::new(2.0, 10.0), 0.3, 0.25);
        let path = astar_plan(&scene, robot.position, Vec2::new(18.0, 10.0), 0.25).unwrap();

        let plain = waypoint_follow(&path, &robot, &params);
        let none = orca_robot_policy(&robot, &[], &path, &params);
        assert_eq!(none, plain);

        // A human beyond the neighbor radius changes nothing either.
        let far = AgentState::at_rest(Vec2::new(2.0 + params.orca.d_neighbor + 0.1, 10.0), 0.0, 0.3);
        let distant = orca_robot_policy(&robot, &[(0, far)], &path, &params);
        assert_eq!(distant, plain);
    }

    #[test]
    fn head_on_human_forces_a_lateral_component() {
        let scene = Scene::empty_room("t", 20.0, 20.0, 0.1);
        let params = WorldParams::default();
        let robot = AgentState {
            position: Vec2::new(5.0, 10.0),
            velocity: Vec2::new(1.0, 0.0),
            heading: 0.0,
            radius: 0.25,
        };
        let human = AgentState {
            position: Vec2::new(7.0, 10.0),
            velocity: Vec2::new(-1.0, 0.0),
            heading: std::f64::consts::PI,
            radius: 0.3,
        };
        let path = astar_plan(&scene, robot.position, Vec2::new(18.0, 10.0), 0.25).unwrap();
        let action = orca_robot_policy(&robot, &[(0, human)], &path, &params);
        assert!(
            action.angular.abs() > 1e-3 || action.linear < 0.9,
            "expected evasive command, got {action:?}"
        );
    }
}
