//! Human trajectory forecasting: a constant-velocity extrapolator and a
//! crowd-model rollout with the robot frozen in place. Both feed the
//! forecast-aware planner and serve as baselines for the learned
//! trajectory head.

use rand_chacha::ChaCha8Rng;

use crate::crowd::{human_step, HumanRuntime};
use crate::geom;
use crate::math::Vec2;
use crate::params::WorldParams;
use crate::scene::{AgentState, Scene};

/// The robot's agent id in crowd updates; humans use their index.
pub const ROBOT_ID: usize = usize::MAX;

/// Predicted positions for N humans over the next `horizon` steps.
/// Masked-out rows are all-zero and excluded from every error metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub horizon: usize,
    pub positions: Vec<Vec<Vec2>>,
    pub mask: Vec<bool>,
}

impl ForecastSet {
    pub fn empty(horizon: usize) -> ForecastSet {
        ForecastSet { horizon, positions: vec![], mask: vec![] }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ForecastError {
    #[error("forecast masks or horizons differ")]
    Mismatch,
}

/// Straight-line extrapolation `p + k·dt·v`, stopped where the center's ray
/// first meets a static surface.
pub fn constant_velocity_forecast(
    humans: &[AgentState],
    scene: &Scene,
    horizon: usize,
    dt: f64,
) -> ForecastSet {
    assert!(horizon >= 1);
    let mut positions = Vec::with_capacity(humans.len());
    for h in humans {
        let speed = h.velocity.norm();
        let mut stop = f64::INFINITY;
        if speed > 1e-12 {
            let dir = h.velocity / speed;
            let mut consider = |a: Vec2, b: Vec2| {
                if let Some(t) = geom::ray_segment(h.position, dir, a, b) {
                    stop = stop.min(t);
                }
            };
            for (a, b) in scene.bounds.edges() {
                consider(a, b);
            }
            for poly in &scene.obstacles {
                for (a, b) in poly.edges() {
                    consider(a, b);
                }
            }
        }
        let row = (1..=horizon)
            .map(|k| {
                let travel = (k as f64 * dt * speed).min(stop);
                if speed > 1e-12 {
                    h.position + h.velocity / speed * travel
                } else {
                    h.position
                }
            })
            .collect();
        positions.push(row);
    }
    ForecastSet { horizon, positions, mask: vec![true; humans.len()] }
}

/// Roll the crowd model forward `horizon` steps on copies, with the robot
/// pinned at its current position and zero velocity. Shares the live
/// simulation's update function, so replaying real actions instead would
/// reproduce the realized trajectories bit-for-bit.
pub fn orca_rollout_forecast(
    humans: &[HumanRuntime],
    robot: &AgentState,
    scene: &Scene,
    rng: &ChaCha8Rng,
    horizon: usize,
    params: &WorldParams,
) -> ForecastSet {
    assert!(horizon >= 1);
    let mut rng = rng.clone();
    let mut frozen = *robot;
    frozen.velocity = Vec2::ZERO;
    let mut sim: Vec<HumanRuntime> = humans.to_vec();
    let mut positions: Vec<Vec<Vec2>> = vec![Vec::with_capacity(horizon); humans.len()];
    for _ in 0..horizon {
        let mut snapshot: Vec<(usize, AgentState)> =
            sim.iter().map(|h| (h.id, h.state)).collect();
        snapshot.push((ROBOT_ID, frozen));
        let mut next = Vec::with_capacity(sim.len());
        for h in &sim {
            let (h2, _) = human_step(h, scene, &snapshot, &mut rng, params);
            next.push(h2);
        }
        sim = next;
        for (row, h) in positions.iter_mut().zip(&sim) {
            row.push(h.state.position);
        }
    }
    ForecastSet { horizon, positions, mask: vec![true; humans.len()] }
}

/// Average and final displacement error over masked-in humans.
pub fn forecast_error(
    pred: &ForecastSet,
    truth: &ForecastSet,
) -> Result<(f64, f64), ForecastError> {
    if pred.horizon != truth.horizon || pred.mask != truth.mask {
        return Err(ForecastError::Mismatch);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut final_sum = 0.0;
    let mut final_count = 0usize;
    for i in 0..pred.mask.len() {
        if !pred.mask[i] {
            continue;
        }
        let (p, t) = (&pred.positions[i], &truth.positions[i]);
        for k in 0..pred.horizon {
            sum += p[k].distance(t[k]);
            count += 1;
        }
        final_sum += p[pred.horizon - 1].distance(t[pred.horizon - 1]);
        final_count += 1;
    }
    if count == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((sum / count as f64, final_sum / final_count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crowd::{HumanSpec, Phase};
    use crate::rng::stream;
    use crate::scene::Pose;

    #[test]
    fn stationary_human_stays_put() {
        let scene = Scene::empty_room("t", 10.0, 10.0, 0.1);
        let h = AgentState::at_rest(Vec2::new(5.0, 5.0), 0.0, 0.3);
        let f = constant_velocity_forecast(&[h], &scene, 4, 0.25);
        assert_eq!(f.positions[0], vec![Vec2::new(5.0, 5.0); 4]);
    }

    #[test]
    fn linear_extrapolation_offsets() {
        let scene = Scene::empty_room("t", 10.0, 10.0, 0.1);
        let mut h = AgentState::at_rest(Vec2::new(2.0, 5.0), 0.0, 0.3);
        h.velocity = Vec2::new(1.0, 0.0);
        let f = constant_velocity_forecast(&[h], &scene, 4, 0.25);
        for (k, p) in f.positions[0].iter().enumerate() {
            assert!((p.x - (2.0 + 0.25 * (k + 1) as f64)).abs() < 1e-12);
            assert!((p.y - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wall_clips_extrapolation() {
        let file = crate::scene::SceneFile {
            name: None,
            seed: None,
            bounds: [0.0, 0.0, 10.0, 10.0],
            polygons: vec![vec![[5.0, 0.0], [6.0, 0.0], [6.0, 10.0], [5.0, 10.0]]],
        };
        let scene = Scene::build(&file, 0.1).unwrap();
        let mut h = AgentState::at_rest(Vec2::new(4.6, 5.0), 0.0, 0.3);
        h.velocity = Vec2::new(1.0, 0.0);
        let f = constant_velocity_forecast(&[h], &scene, 4, 0.25);
        // Wall face is 0.4 m ahead: step 1 travels 0.25, all later steps
        // clamp at the contact point.
        assert!((f.positions[0][0].x - 4.85).abs() < 1e-12);
        for p in &f.positions[0][1..] {
            assert!((p.x - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn done_crowd_rollout_is_constant() {
        let scene = Scene::empty_room("t", 10.0, 10.0, 0.1);
        let params = WorldParams::default();
        let spec = HumanSpec {
            start: Pose::new(Vec2::new(3.0, 3.0), 0.0),
            goals: [Vec2::new(7.0, 7.0), Vec2::new(3.0, 7.0)],
            speed_factor: 1.0,
            pause_steps: 0,
            radius: 0.3,
        };
        let mut h = HumanRuntime::spawn(0, spec);
        h.phase = Phase::Done;
        let robot = AgentState::at_rest(Vec2::new(5.0, 5.0), 0.0, 0.25);
        let rng = stream(4, "crowd");
        let f = orca_rollout_forecast(&[h], &robot, &scene, &rng, 6, &params);
        assert_eq!(f.positions[0], vec![Vec2::new(3.0, 3.0); 6]);
    }

    #[test]
    fn free_walk_matches_constant_velocity_first_step() {
        let scene = Scene::empty_room("t", 20.0, 20.0, 0.1);
        let params = WorldParams::default();
        let spec = HumanSpec {
            start: Pose::new(Vec2::new(2.0, 10.0), 0.0),
            goals: [Vec2::new(18.0, 10.0), Vec2::new(2.0, 10.0)],
            speed_factor: 1.0,
            pause_steps: 0,
            radius: 0.3,
        };
        let mut h = HumanRuntime::spawn(0, spec);
        h.state.velocity = Vec2::new(1.0, 0.0); // mid-stride
        let robot = AgentState::at_rest(Vec2::new(10.0, 2.0), 0.0, 0.25);
        let rng = stream(5, "crowd");
        let rollout = orca_rollout_forecast(&[h.clone()], &robot, &scene, &rng, 4, &params);
        let cv = constant_velocity_forecast(&[h.state], &scene, 4, 0.25);
        assert!(rollout.positions[0][0].distance(cv.positions[0][0]) < 1e-6);
    }

    #[test]
    fn crossing_humans_deviate_and_match_replay() {
        let scene = Scene::empty_room("t", 20.0, 20.0, 0.1);
        let params = WorldParams::default();
        let mk = |x: f64, y: f64, gx: f64, gy: f64| HumanSpec {
            start: Pose::new(Vec2::new(x, y), 0.0),
            goals: [Vec2::new(gx, gy), Vec2::new(x, y)],
            speed_factor: 1.0,
            pause_steps: 0,
            radius: 0.3,
        };
        let humans = vec![
            HumanRuntime::spawn(0, mk(7.0, 10.0, 13.0, 10.0)),
            HumanRuntime::spawn(1, mk(13.0, 10.0, 7.0, 10.0)),
        ];
        let robot = AgentState::at_rest(Vec2::new(10.0, 18.0), 0.0, 0.25);
        let rng = stream(6, "crowd");
        let f = orca_rollout_forecast(&humans, &robot, &scene, &rng, 12, &params);
        let lateral: f64 = f.positions[0].iter().map(|p| (p.y - 10.0).abs()).fold(0.0, f64::max);
        assert!(lateral > 0.01, "expected sidestep, got {lateral}");

        // Manual replay of the same update is bit-identical.
        let mut rng2 = rng.clone();
        let mut sim = humans.clone();
        let mut frozen = robot;
        frozen.velocity = Vec2::ZERO;
        for k in 0..12 {
            let mut snap: Vec<(usize, AgentState)> = sim.iter().map(|h| (h.id, h.state)).collect();
            snap.push((ROBOT_ID, frozen));
            let mut next = Vec::new();
            for h in &sim {
                let (h2, _) = human_step(h, &scene, &snap, &mut rng2, &params);
                next.push(h2);
            }
            sim = next;
            for (i, h) in sim.iter().enumerate() {
                assert_eq!(h.state.position, f.positions[i][k]);
            }
        }
    }

    #[test]
    fn displacement_errors() {
        let mk = |rows: Vec<Vec<Vec2>>| ForecastSet {
            horizon: 2,
            mask: vec![true; rows.len()],
            positions: rows,
        };
        let truth = mk(vec![
            vec![Vec2::ZERO, Vec2::ZERO],
            vec![Vec2::ZERO, Vec2::ZERO],
        ]);
        assert_eq!(forecast_error(&truth, &truth), Ok((0.0, 0.0)));

        let off = mk(vec![
            vec![Vec2::new(0.3, 0.0), Vec2::new(0.0, 0.3)],
            vec![Vec2::new(-0.3, 0.0), Vec2::new(0.0, -0.3)],
        ]);
        let (ade, fde) = forecast_error(&off, &truth).unwrap();
        assert!((ade - 0.3).abs() < 1e-12 && (fde - 0.3).abs() < 1e-12);

        // Per-point errors {0.1, 0.2, 0.3, 0.4}: ADE 0.25, FDE mean{0.2, 0.4}.
        let pred = mk(vec![
            vec![Vec2::new(0.1, 0.0), Vec2::new(0.2, 0.0)],
            vec![Vec2::new(0.0, 0.3), Vec2::new(0.0, 0.4)],
        ]);
        let (ade, fde) = forecast_error(&pred, &truth).unwrap();
        assert!((ade - 0.25).abs() < 1e-12);
        assert!((fde - 0.3).abs() < 1e-12);

        let short = ForecastSet { horizon: 1, positions: vec![], mask: vec![] };
        assert_eq!(forecast_error(&short, &truth), Err(ForecastError::Mismatch));
    }
}
