//! Static world model: bounded arena, obstacle polygons, occupancy raster,
//! depth sensing, and free-space queries.

use serde::{Deserialize, Serialize};

use crate::geom::{self, Bounds, Polygon};
use crate::grid::{self, OccupancyGrid};
use crate::math::{wrap_angle, Vec2};

/// Default raster resolution (m/cell).
pub const R_GRID: f64 = 0.1;
/// Depth sensor defaults: ray count, field of view, max range.
pub const N_RAYS: usize = 64;
pub const SENSOR_FOV: f64 = std::f64::consts::FRAC_PI_2;
pub const SENSOR_RANGE: f64 = 5.0;

/// Position plus heading. Heading is kept normalized to [-π, π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Pose { position, heading: wrap_angle(heading) }
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }

    pub fn is_valid(&self) -> bool {
        self.position.is_finite()
            && self.heading.is_finite()
            && (-std::f64::consts::PI..std::f64::consts::PI).contains(&self.heading)
    }
}

/// Kinematic state of one agent (robot or human).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub heading: f64,
    pub radius: f64,
}

impl AgentState {
    pub fn at_rest(position: Vec2, heading: f64, radius: f64) -> Self {
        AgentState { position, velocity: Vec2::ZERO, heading: wrap_angle(heading), radius }
    }

    pub fn pose(&self) -> Pose {
        Pose { position: self.position, heading: self.heading }
    }
}

/// A 1D range scan: `ranges[i]` is the distance along ray `i`, clamped to
/// the sensor's max range. Ray `i` points at `heading + fov·(i/n − 1/2)`,
/// so with an even ray count, ray `n/2` looks dead ahead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthScan {
    pub ranges: Vec<f64>,
    pub fov: f64,
}

impl DepthScan {
    pub fn n_rays(&self) -> usize {
        self.ranges.len()
    }
}

/// On-disk scene description. The raster resolution is a runtime parameter
/// and is not persisted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// [x_min, y_min, x_max, y_max] in meters.
    pub bounds: [f64; 4],
    /// Obstacle rings as [x, y] vertex lists, meters, no closing repeat.
    pub polygons: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("malformed scene JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bounds are not a finite positive-area rectangle: {0:?}")]
    InvalidBounds([f64; 4]),
    #[error("polygon {index} has {got} vertices; need at least 3")]
    TooFewVertices { index: usize, got: usize },
    #[error("polygon {index} contains non-finite coordinates")]
    NonFinite { index: usize },
    #[error("polygon {index} is self-intersecting or has a degenerate edge")]
    NotSimple { index: usize },
    #[error("polygon {index} area {area:.6} m² is below the raster cell {cell:.6} m²")]
    Degenerate { index: usize, area: f64, cell: f64 },
    #[error("raster would need {cells:.0} cells at this resolution (cap {max})")]
    TooLarge { cells: f64, max: usize },
    #[error("scene has no navigable free space")]
    NoFreeSpace,
}

/// Upper bound on occupancy-raster cells; bounds that would exceed it
/// are rejected instead of allocated.
pub const MAX_GRID_CELLS: usize = 25_000_000;

/// Immutable static world. Construction validates the obstacle set and
/// precomputes the occupancy raster; everything downstream reads it.
#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    pub seed: Option<u64>,
    pub bounds: Bounds,
    pub obstacles: Vec<Polygon>,
    pub grid: OccupancyGrid,
    /// Free-cell area in m² (bounds area minus rasterized obstacles).
    pub area_navigable: f64,
}

impl Scene {
    pub fn build(file: &SceneFile, resolution: f64) -> Result<Scene, SceneError> {
        let [x0, y0, x1, y1] = file.bounds;
        let bounds = Bounds::new(Vec2::new(x0, y0), Vec2::new(x1, y1));
        if !bounds.is_valid() {
            return Err(SceneError::InvalidBounds(file.bounds));
        }
        let nx = ((bounds.width() / resolution) - 1e-9).ceil().max(1.0);
        let ny = ((bounds.height() / resolution) - 1e-9).ceil().max(1.0);
        if nx * ny > MAX_GRID_CELLS as f64 {
            return Err(SceneError::TooLarge { cells: nx * ny, max: MAX_GRID_CELLS });
        }
        let mut obstacles = Vec::with_capacity(file.polygons.len());
        for (index, ring) in file.polygons.iter().enumerate() {
            if ring.len() < 3 {
                return Err(SceneError::TooFewVertices { index, got: ring.len() });
            }
            let poly = Polygon::new(ring.iter().map(|&[x, y]| Vec2::new(x, y)).collect());
            if !poly.all_finite() {
                return Err(SceneError::NonFinite { index });
            }
            if !poly.is_simple() {
                return Err(SceneError::NotSimple { index });
            }
            let (area, cell) = (poly.area(), resolution * resolution);
            if area < cell {
                return Err(SceneError::Degenerate { index, area, cell });
            }
            obstacles.push(poly);
        }
        let grid = OccupancyGrid::rasterize(bounds, &obstacles, resolution);
        let area_navigable = grid.free_count() as f64 * resolution * resolution;
        if area_navigable <= 0.0 {
            return Err(SceneError::NoFreeSpace);
        }
        Ok(Scene {
            name: file.name.clone().unwrap_or_else(|| "unnamed".to_string()),
            seed: file.seed,
            bounds,
            obstacles,
            grid,
            area_navigable,
        })
    }

    pub fn from_json_str(json: &str, resolution: f64) -> Result<Scene, SceneError> {
        let file: SceneFile = serde_json::from_str(json)?;
        Scene::build(&file, resolution)
    }

    pub fn to_file(&self) -> SceneFile {
        SceneFile {
            name: Some(self.name.clone()),
            seed: self.seed,
            bounds: [self.bounds.min.x, self.bounds.min.y, self.bounds.max.x, self.bounds.max.y],
            polygons: self
                .obstacles
                .iter()
                .map(|p| p.points.iter().map(|v| [v.x, v.y]).collect())
                .collect(),
        }
    }

    /// Rectangular arena with no obstacles.
    pub fn empty_room(name: &str, width: f64, height: f64, resolution: f64) -> Scene {
        let file = SceneFile {
            name: Some(name.to_string()),
            seed: None,
            bounds: [0.0, 0.0, width, height],
            polygons: vec![],
        };
        Scene::build(&file, resolution).expect("empty room is always valid")
    }

    /// True when a disc of `radius` at `position` stays inside the arena and
    /// overlaps no obstacle interior. Tangency (distance exactly equal to the
    /// radius) counts as free.
    pub fn is_free(&self, position: Vec2, radius: f64) -> bool {
        if !self.bounds.contains_disc(position, radius) {
            return false;
        }
        for poly in &self.obstacles {
            let edge_dist = poly
                .edges()
                .map(|(a, b)| geom::point_segment_distance(position, a, b))
                .fold(f64::INFINITY, f64::min);
            if edge_dist < radius {
                return false;
            }
            // Center strictly inside: intersecting at any radius.
            if edge_dist > 0.0 && poly.contains(position) {
                return false;
            }
        }
        true
    }

    /// Distance from `position` to the nearest static surface (obstacle edge
    /// or arena wall); 0 inside an obstacle or outside the arena.
    pub fn static_clearance(&self, position: Vec2) -> f64 {
        let mut d = self.bounds.interior_clearance(position).max(0.0);
        for poly in &self.obstacles {
            if poly.contains(position) {
                return 0.0;
            }
            d = d.min(poly.distance(position));
        }
        d
    }

    /// Shortest obstacle-avoiding path length between two points at the
    /// given clearance, or None when unreachable. Never below the
    /// straight-line distance.
    pub fn geodesic(&self, a: Vec2, b: Vec2, clearance: f64) -> Option<f64> {
        grid::geodesic_distance(&self.grid, a, b, clearance)
    }

    /// Unit normal of the nearest static surface as seen from `p` (points
    /// away from the surface), or zero when `p` touches it exactly.
    fn nearest_surface_normal(&self, p: Vec2) -> Vec2 {
        let mut best_d = f64::INFINITY;
        let mut best_q = p;
        let mut consider = |a: Vec2, b: Vec2| {
            let ab = b - a;
            let len_sq = ab.norm_sq();
            let t = if len_sq == 0.0 { 0.0 } else { ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0) };
            let q = a + ab * t;
            let d = p.distance(q);
            if d < best_d {
                best_d = d;
                best_q = q;
            }
        };
        for (a, b) in self.bounds.edges() {
            consider(a, b);
        }
        for poly in &self.obstacles {
            for (a, b) in poly.edges() {
                consider(a, b);
            }
        }
        (p - best_q).normalized_or_zero()
    }

    /// Move a disc from `from` toward `to`, stopping at static contact and
    /// spending the leftover motion sliding along the surface tangent.
    /// Returns the final position and whether contact occurred. Every
    /// returned position satisfies `is_free`, so penetration never exceeds
    /// the contact search resolution (≪ 1e-6 m).
    pub fn slide_move(&self, from: Vec2, to: Vec2, radius: f64) -> (Vec2, bool) {
        if self.is_free(to, radius) {
            return (to, false);
        }
        if !self.is_free(from, radius) {
            // Never happens when motion starts free; refuse to dig deeper.
            return (from, true);
        }
        let (contact, t) = self.advance_to_contact(from, to, radius);
        let rem = (to - from) * (1.0 - t);
        let normal = self.nearest_surface_normal(contact);
        let into = rem.dot(normal);
        let tangential = if into < 0.0 { rem - normal * into } else { rem };
        if tangential.norm_sq() < 1e-18 {
            return (contact, true);
        }
        let (slid, _) = self.advance_to_contact(contact, contact + tangential, radius);
        (slid, true)
    }

    /// Largest free prefix of the segment [from → to]: binary search for the
    /// last free point, assuming `from` free and `to` blocked-or-free.
    fn advance_to_contact(&self, from: Vec2, to: Vec2, radius: f64) -> (Vec2, f64) {
        if self.is_free(to, radius) {
            return (to, 1.0);
        }
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        for _ in 0..36 {
            let mid = 0.5 * (lo + hi);
            if self.is_free(from + (to - from) * mid, radius) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (from + (to - from) * lo, lo)
    }

    /// Cast `n_rays` over `fov` centered on the pose heading; each ray
    /// reports the nearest hit among arena walls, obstacle edges, and agent
    /// discs, clamped to `d_max`.
    pub fn raycast_depth(
        &self,
        agents: &[AgentState],
        pose: Pose,
        n_rays: usize,
        fov: f64,
        d_max: f64,
    ) -> DepthScan {
        assert!(n_rays >= 1, "need at least one ray");
        let mut ranges = Vec::with_capacity(n_rays);
        for i in 0..n_rays {
            let angle = pose.heading + fov * (i as f64 / n_rays as f64 - 0.5);
            let dir = Vec2::from_angle(angle);
            let mut t = d_max;
            for (a, b) in self.bounds.edges() {
                if let Some(hit) = geom::ray_segment(pose.position, dir, a, b) {
                    t = t.min(hit);
                }
            }
            for poly in &self.obstacles {
                for (a, b) in poly.edges() {
                    if let Some(hit) = geom::ray_segment(pose.position, dir, a, b) {
                        t = t.min(hit);
                    }
                }
            }
            for agent in agents {
                if let Some(hit) = geom::ray_circle(pose.position, dir, agent.position, agent.radius)
                {
                    t = t.min(hit);
                }
            }
            ranges.push(t.max(0.0));
        }
        DepthScan { ranges, fov }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room_with_block() -> Scene {
        let file = SceneFile {
            name: None,
            seed: None,
            bounds: [0.0, 0.0, 10.0, 10.0],
            polygons: vec![vec![[4.0, 4.0], [6.0, 4.0], [6.0, 6.0], [4.0, 6.0]]],
        };
        Scene::build(&file, R_GRID).unwrap()
    }

    #[test]
    fn build_rejects_oversized_rasters() {
        let file = SceneFile {
            name: None,
            seed: None,
            bounds: [0.0, 0.0, 1.0e9, 1.0e9],
            polygons: vec![],
        };
        assert!(matches!(Scene::build(&file, R_GRID), Err(SceneError::TooLarge { .. })));
    }

    #[test]
    fn build_rejects_bowtie() {
        let file = SceneFile {
            name: None,
            seed: None,
            bounds: [0.0, 0.0, 5.0, 5.0],
            polygons: vec![vec![[1.0, 1.0], [2.0, 2.0], [2.0, 1.0], [1.0, 2.0]]],
        };
        assert!(matches!(Scene::build(&file, R_GRID), Err(SceneError::NotSimple { index: 0 })));
    }

    #[test]
    fn build_rejects_sliver() {
        let file = SceneFile {
            name: None,
            seed: None,
            bounds: [0.0, 0.0, 5.0, 5.0],
            polygons: vec![vec![[1.0, 1.0], [2.0, 1.0], [2.0, 1.001]]],
        };
        assert!(matches!(Scene::build(&file, R_GRID), Err(SceneError::Degenerate { .. })));
    }

    #[test]
    fn free_space_conventions() {
        let scene = room_with_block();
        assert!(scene.is_free(Vec2::new(1.0, 1.0), 0.25));
        assert!(!scene.is_free(Vec2::new(5.0, 5.0), 0.25)); // inside block
        assert!(!scene.is_free(Vec2::new(0.1, 5.0), 0.25)); // too close to wall
        // Tangent to the obstacle edge at exactly the radius: free.
        assert!(scene.is_free(Vec2::new(3.75, 5.0), 0.25));
        assert!(!scene.is_free(Vec2::new(3.76, 5.0), 0.25));
    }

    #[test]
    fn raycast_wall_and_human() {
        let scene = Scene::empty_room("t", 30.0, 30.0, R_GRID);
        let pose = Pose::new(Vec2::new(15.0, 15.0), 0.0);
        // Nothing within sensor range: all rays at max.
        let scan = scene.raycast_depth(&[], pose, N_RAYS, SENSOR_FOV, SENSOR_RANGE);
        assert!(scan.ranges.iter().all(|&r| (r - SENSOR_RANGE).abs() < 1e-12));
        // A human 3 m dead ahead: center ray reads 3 − 0.3.
        let human = AgentState::at_rest(Vec2::new(18.0, 15.0), 0.0, 0.3);
        let scan = scene.raycast_depth(&[human], pose, N_RAYS, SENSOR_FOV, SENSOR_RANGE);
        assert!((scan.ranges[N_RAYS / 2] - 2.7).abs() < 1e-9);
    }

    #[test]
    fn raycast_center_ray_hits_wall_exactly() {
        let scene = room_with_block();
        let pose = Pose::new(Vec2::new(2.0, 5.0), 0.0);
        let scan = scene.raycast_depth(&[], pose, N_RAYS, SENSOR_FOV, SENSOR_RANGE);
        assert!((scan.ranges[N_RAYS / 2] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn raycast_rotation_covariant() {
        let scene = Scene::empty_room("t", 40.0, 40.0, R_GRID);
        let center = Vec2::new(20.0, 20.0);
        let human = AgentState::at_rest(center + Vec2::new(2.5, 0.7), 0.0, 0.3);
        let base = scene.raycast_depth(&[human], Pose::new(center, 0.0), 32, SENSOR_FOV, 5.0);
        let theta = 0.83;
        let rotated_human =
            AgentState::at_rest(center + (human.position - center).rotated(theta), 0.0, 0.3);
        let turned =
            scene.raycast_depth(&[rotated_human], Pose::new(center, theta), 32, SENSOR_FOV, 5.0);
        for (a, b) in base.ranges.iter().zip(&turned.ranges) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn scene_roundtrip() {
        let scene = room_with_block();
        let json = serde_json::to_string(&scene.to_file()).unwrap();
        let back = Scene::from_json_str(&json, R_GRID).unwrap();
        assert_eq!(back.obstacles, scene.obstacles);
        assert_eq!(back.grid.occupied_count(), scene.grid.occupied_count());
    }
}
