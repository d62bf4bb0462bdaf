//! Procedural scenes and episode sampling.
//!
//! Scenes are rectangular rooms with a few axis-aligned or rotated box
//! obstacles. Episodes sample a robot start/goal pair whose shortest path
//! is meaningfully long (and bent, where the geometry allows it), plus a
//! crowd sized to the navigable area. Everything is rejection-sampled with
//! bounded attempts so a pathological scene fails loudly instead of
//! looping.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::crowd::HumanSpec;
use crate::episode::Episode;
use crate::geom::Polygon;
use crate::grid::{ComponentMap, DistanceField};
use crate::math::Vec2;
use crate::params::WorldParams;
use crate::scene::{Pose, Scene, SceneError, SceneFile};

/// Attempt budget for one episode before giving up on the scene.
pub const EPISODE_ATTEMPTS: usize = 200;
/// Attempts that insist on a detour (geodesic/Euclidean ≥ MIN_DETOUR_RATIO)
/// before falling back to distance-only acceptance.
const DETOUR_ATTEMPTS: usize = 120;
pub const MIN_GEODESIC: f64 = 3.0;
pub const MAX_GEODESIC: f64 = 15.0;
pub const MIN_DETOUR_RATIO: f64 = 1.05;
/// Default inclusive bound for the humans' pause draw at their first goal.
pub const PAUSE_STEPS: u32 = 40;

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("scene construction failed: {0}")]
    Scene(#[from] SceneError),
    #[error("no start/goal pair with geodesic in [{MIN_GEODESIC}, {MAX_GEODESIC}] m after {EPISODE_ATTEMPTS} attempts")]
    NoTask,
    #[error("could not place human {0} after {EPISODE_ATTEMPTS} attempts")]
    NoHumanSlot(usize),
}

/// Humans per episode as a function of navigable area (m²).
pub fn human_count_range(area_navigable: f64) -> (usize, usize) {
    if area_navigable < 25.0 {
        (1, 2)
    } else if area_navigable <= 60.0 {
        (2, 4)
    } else {
        (4, 6)
    }
}

/// Sample a rectangular room with 1–4 box obstacles. Retries internally
/// until the room passes scene validation and keeps a healthy share of
/// its floor area navigable.
pub fn generate_scene(
    name: &str,
    seed: u64,
    rng: &mut ChaCha8Rng,
    resolution: f64,
) -> Result<Scene, GenError> {
    for _ in 0..50 {
        let w = rng.gen_range(6.0..=14.0);
        let h = rng.gen_range(6.0..=14.0);
        let n_obstacles = rng.gen_range(1..=4usize);
        let mut polygons = Vec::new();
        for _ in 0..n_obstacles {
            let bw = rng.gen_range(0.6..=2.5);
            let bh = rng.gen_range(0.6..=2.5);
            let cx = rng.gen_range(1.0 + bw / 2.0..=w - 1.0 - bw / 2.0);
            let cy = rng.gen_range(1.0 + bh / 2.0..=h - 1.0 - bh / 2.0);
            let angle: f64 = rng.gen_range(-0.6..=0.6);
            let rect = Polygon::rectangle(Vec2::new(cx, cy), bw, bh);
            let rotated: Vec<Vec2> = rect
                .points
                .iter()
                .map(|p| Vec2::new(cx, cy) + (*p - Vec2::new(cx, cy)).rotated(angle))
                .collect();
            polygons.push(rotated.iter().map(|p| [p.x, p.y]).collect());
        }
        let file = SceneFile {
            name: Some(name.to_string()),
            seed: Some(seed),
            bounds: [0.0, 0.0, w, h],
            polygons,
        };
        match Scene::build(&file, resolution) {
            Ok(scene) => {
                // Keep rooms where obstacles carve out some but not most
                // of the floor.
                if scene.area_navigable >= 0.6 * scene.bounds.area() {
                    return Ok(scene);
                }
            }
            Err(SceneError::Degenerate { .. }) | Err(SceneError::NoFreeSpace) => continue,
            Err(e) => return Err(GenError::Scene(e)),
        }
    }
    // Give up on obstacles; an empty room always validates.
    let w = rng.gen_range(6.0..=14.0);
    let h = rng.gen_range(6.0..=14.0);
    Ok(Scene::empty_room(name, w, h, resolution))
}

/// Uniform position in the bounds that is free at `clearance`.
fn sample_free(scene: &Scene, clearance: f64, rng: &mut ChaCha8Rng) -> Option<Vec2> {
    let b = &scene.bounds;
    for _ in 0..EPISODE_ATTEMPTS {
        let p = Vec2::new(rng.gen_range(b.min.x..=b.max.x), rng.gen_range(b.min.y..=b.max.y));
        if scene.is_free(p, clearance) {
            return Some(p);
        }
    }
    None
}

/// Sample a validated episode on `scene`. `seed` becomes the episode's
/// simulation seed; `rng` drives the sampling itself.
pub fn generate_episode(
    scene: &Scene,
    seed: u64,
    rng: &mut ChaCha8Rng,
    params: &WorldParams,
) -> Result<Episode, GenError> {
    let r_robot = params.robot_radius;
    let grid = &scene.grid;
    let human_components = ComponentMap::compute(grid, params.human_radius);

    // Start/goal: one shortest-path field per start candidate, many goal
    // draws against it. Insist on a detour first, then settle for length.
    let mut task = None;
    let mut robot_field = None;
    let mut start = Vec2::ZERO;
    for attempt in 0..EPISODE_ATTEMPTS {
        if attempt % 10 == 0 || robot_field.is_none() {
            robot_field = sample_free(scene, r_robot, rng)
                .and_then(|s| DistanceField::compute(grid, s, r_robot).map(|f| (s, f)));
        }
        let Some((s, field)) = &robot_field else { continue };
        start = *s;
        let Some(goal) = sample_free(scene, r_robot, rng) else { continue };
        let cell_dist = field.at(goal);
        if !cell_dist.is_finite() {
            continue;
        }
        let euclid = start.distance(goal);
        let geo = cell_dist.max(euclid);
        if !(MIN_GEODESIC..=MAX_GEODESIC).contains(&geo) {
            continue;
        }
        if attempt < DETOUR_ATTEMPTS && geo < MIN_DETOUR_RATIO * euclid {
            continue;
        }
        task = Some((goal, geo));
        break;
    }
    let (goal, geodesic_start) = task.ok_or(GenError::NoTask)?;
    let (_, robot_field) = robot_field.expect("a task implies a field");

    let (lo, hi) = human_count_range(scene.area_navigable);
    let n_humans = rng.gen_range(lo..=hi);
    let mut humans: Vec<HumanSpec> = Vec::with_capacity(n_humans);
    for i in 0..n_humans {
        let mut placed = false;
        'attempt: for _ in 0..EPISODE_ATTEMPTS {
            let Some(hs) = sample_free(scene, params.human_radius, rng) else { continue };
            // Keep spawn clear of the robot and other humans.
            if hs.distance(start) < 1.0 {
                continue;
            }
            if humans.iter().any(|h| hs.distance(h.start.position) < 0.7) {
                continue;
            }
            let (Some(g1), Some(g2)) = (
                sample_free(scene, params.human_radius, rng),
                sample_free(scene, params.human_radius, rng),
            ) else {
                continue;
            };
            // Worth walking to, not a twitch in place.
            if hs.distance(g1) < 1.0 || g1.distance(g2) < 1.0 {
                continue;
            }
            // All waypoints in the robot's navigable component so the
            // crowd actually shares the robot's space.
            for p in [hs, g1, g2] {
                if !robot_field.at(p).is_finite() {
                    continue 'attempt;
                }
            }
            // The human itself must be able to walk the chain at its own
            // (larger) clearance.
            if !human_components.same_component(grid, hs, g1)
                || !human_components.same_component(grid, g1, g2)
            {
                continue;
            }
            let heading = (g1 - hs).angle();
            humans.push(HumanSpec {
                start: Pose::new(hs, heading),
                goals: [g1, g2],
                speed_factor: rng.gen_range(0.8..=1.2),
                pause_steps: PAUSE_STEPS,
                radius: params.human_radius,
            });
            placed = true;
            break;
        }
        if !placed {
            return Err(GenError::NoHumanSlot(i));
        }
    }

    let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    Ok(Episode {
        scene_id: scene.name.clone(),
        robot_start: Pose::new(start, heading),
        robot_goal: goal,
        humans,
        seed,
        max_steps: params.max_steps,
        geodesic_start,
    })
}
