//! Grid A* with line-of-sight shortcutting, plus pure-pursuit waypoint
//! tracking. The tracker deliberately ignores humans — it is the
//! "drive the shortest path" baseline.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::grid::{OccupancyGrid, SQRT_2};
use crate::math::{wrap_angle, Vec2};
use crate::params::{Action, WorldParams};
use crate::scene::{AgentState, Scene};

/// Pure-pursuit lookahead distance (m).
pub const LOOKAHEAD: f64 = 0.6;

/// Polyline the robot tracks, densified so consecutive points sit at most
/// two grid cells apart.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath {
    pub points: Vec<Vec2>,
    pub total_length: f64,
}

impl WaypointPath {
    fn from_points(points: Vec<Vec2>) -> Self {
        let total_length = points.windows(2).map(|w| w[0].distance(w[1])).sum();
        WaypointPath { points, total_length }
    }

    pub fn goal(&self) -> Vec2 {
        *self.points.last().expect("paths are never empty")
    }

    /// Shortest distance from `p` to any waypoint.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        self.points.iter().map(|&q| p.distance(q)).fold(f64::INFINITY, f64::min)
    }

    /// Distance left to the path's end: detour to the best waypoint plus
    /// the polyline length from there. Decreases monotonically as the
    /// robot advances along the path; collapses to plain goal distance on
    /// straight paths.
    pub fn remaining_from(&self, p: Vec2) -> f64 {
        let mut suffix = 0.0;
        let mut best = f64::INFINITY;
        for i in (0..self.points.len()).rev() {
            best = best.min(p.distance(self.points[i]) + suffix);
            if i > 0 {
                suffix += self.points[i - 1].distance(self.points[i]);
            }
        }
        best
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Node {
    f: f64,
    idx: u32,
}

impl Eq for Node {}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.idx.cmp(&self.idx))
    }
}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest clearance-respecting path from `start` to `goal`, shortcut by
/// grid line-of-sight and densified. None when either endpoint is blocked
/// or no path exists.
pub fn astar_plan(scene: &Scene, start: Vec2, goal: Vec2, clearance: f64) -> Option<WaypointPath> {
    if start == goal {
        return Some(WaypointPath { points: vec![start], total_length: 0.0 });
    }
    let grid = &scene.grid;
    let (sx, sy) = grid.cell_of(start)?;
    let (gx, gy) = grid.cell_of(goal)?;
    if grid.is_blocked(sx, sy, clearance) || grid.is_blocked(gx, gy, clearance) {
        return None;
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let res = grid.resolution;
    let octile = |ax: usize, ay: usize| -> f64 {
        let dx = (ax as f64 - gx as f64).abs();
        let dy = (ay as f64 - gy as f64).abs();
        res * (SQRT_2 * dx.min(dy) + (dx - dy).abs())
    };
    let start_idx = grid.index(sx, sy);
    let goal_idx = grid.index(gx, gy);
    let mut g = vec![f64::INFINITY; nx * ny];
    let mut parent = vec![u32::MAX; nx * ny];
    let mut open = BinaryHeap::new();
    g[start_idx] = 0.0;
    open.push(Node { f: octile(sx, sy), idx: start_idx as u32 });
    while let Some(Node { f, idx }) = open.pop() {
        let idx = idx as usize;
        if idx == goal_idx {
            break;
        }
        let (ix, iy) = (idx % nx, idx / nx);
        if f > g[idx] + octile(ix, iy) + 1e-12 {
            continue; // stale entry
        }
        for dy in -1_i64..=1 {
            for dx in -1_i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let jx = ix as i64 + dx;
                let jy = iy as i64 + dy;
                if jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                    continue;
                }
                let (jx, jy) = (jx as usize, jy as usize);
                if grid.is_blocked(jx, jy, clearance) {
                    continue;
                }
                let diagonal = dx != 0 && dy != 0;
                if diagonal
                    && (grid.is_blocked(jx, iy, clearance) || grid.is_blocked(ix, jy, clearance))
                {
                    continue;
                }
                let step = if diagonal { SQRT_2 * res } else { res };
                let jdx = grid.index(jx, jy);
                let cand = g[idx] + step;
                if cand < g[jdx] {
                    g[jdx] = cand;
                    parent[jdx] = idx as u32;
                    open.push(Node { f: cand + octile(jx, jy), idx: jdx as u32 });
                }
            }
        }
    }
    if !g[goal_idx].is_finite() {
        return None;
    }
    // Cell chain goal→start, then swap in the exact endpoints.
    let mut cells = Vec::new();
    let mut cur = goal_idx;
    while cur != start_idx {
        cells.push(cur);
        cur = parent[cur] as usize;
    }
    cells.push(start_idx);
    cells.reverse();
    let mut raw: Vec<Vec2> = cells.iter().map(|&i| grid.center(i % nx, i / nx)).collect();
    raw[0] = start;
    if raw.len() == 1 {
        raw.push(goal);
    } else {
        let last = raw.len() - 1;
        raw[last] = goal;
    }
    let shortcut = shortcut_los(grid, &raw, clearance);
    Some(WaypointPath::from_points(densify(&shortcut, 2.0 * res)))
}

/// Greedy string-pulling: from each anchor keep extending the jump while the
/// straight segment stays in unblocked cells.
fn shortcut_los(grid: &OccupancyGrid, points: &[Vec2], clearance: f64) -> Vec<Vec2> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut out = vec![points[0]];
    let mut i = 0;
    while i + 1 < points.len() {
        let mut j = i + 1;
        while j + 1 < points.len() && line_of_sight(grid, points[i], points[j + 1], clearance) {
            j += 1;
        }
        out.push(points[j]);
        i = j;
    }
    out
}

/// True when every raster cell the segment passes through is unblocked at
/// the given clearance. Exact cell walk (no sampling); crossing exactly
/// through a cell corner conservatively checks both side cells.
pub fn line_of_sight(grid: &OccupancyGrid, a: Vec2, b: Vec2, clearance: f64) -> bool {
    let Some((mut ix, mut iy)) = grid.cell_of(a) else { return false };
    let Some((jx, jy)) = grid.cell_of(b) else { return false };
    let blocked = |x: usize, y: usize| grid.is_blocked(x, y, clearance);
    if blocked(ix, iy) {
        return false;
    }
    let d = b - a;
    let step_x: i64 = if d.x > 0.0 { 1 } else { -1 };
    let step_y: i64 = if d.y > 0.0 { 1 } else { -1 };
    let res = grid.resolution;
    let boundary = |i: usize, step: i64, origin: f64| -> f64 {
        origin + (i as f64 + if step > 0 { 1.0 } else { 0.0 }) * res
    };
    let mut t_max_x = if d.x == 0.0 {
        f64::INFINITY
    } else {
        (boundary(ix, step_x, grid.origin.x) - a.x) / d.x
    };
    let mut t_max_y = if d.y == 0.0 {
        f64::INFINITY
    } else {
        (boundary(iy, step_y, grid.origin.y) - a.y) / d.y
    };
    let t_delta_x = if d.x == 0.0 { f64::INFINITY } else { res / d.x.abs() };
    let t_delta_y = if d.y == 0.0 { f64::INFINITY } else { res / d.y.abs() };
    let mut guard = grid.nx + grid.ny + 4;
    while (ix, iy) != (jx, jy) && guard > 0 {
        guard -= 1;
        let corner = (t_max_x - t_max_y).abs() < 1e-15;
        if corner {
            // Diagonal corner crossing: require both side cells free too.
            let sx = ix as i64 + step_x;
            let sy = iy as i64 + step_y;
            if sx < 0 || sy < 0 || sx >= grid.nx as i64 || sy >= grid.ny as i64 {
                return false;
            }
            if blocked(sx as usize, iy) || blocked(ix, sy as usize) {
                return false;
            }
            ix = sx as usize;
            iy = sy as usize;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        } else if t_max_x < t_max_y {
            let sx = ix as i64 + step_x;
            if sx < 0 || sx >= grid.nx as i64 {
                return false;
            }
            ix = sx as usize;
            t_max_x += t_delta_x;
        } else {
            let sy = iy as i64 + step_y;
            if sy < 0 || sy >= grid.ny as i64 {
                return false;
            }
            iy = sy as usize;
            t_max_y += t_delta_y;
        }
        if blocked(ix, iy) {
            return false;
        }
    }
    guard > 0
}

fn densify(points: &[Vec2], max_gap: f64) -> Vec<Vec2> {
    if points.len() < 2 {
        return points.to_vec();
    }
    let mut out = vec![points[0]];
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = a.distance(b);
        let pieces = (len / max_gap).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            out.push(a + (b - a) * (k as f64 / pieces as f64));
        }
    }
    out
}

/// Pure-pursuit tracking of a waypoint path: steer toward the furthest
/// waypoint within the lookahead circle, slowing with heading error. Humans
/// are invisible to this controller by design.
pub fn waypoint_follow(path: &WaypointPath, robot: &AgentState, params: &WorldParams) -> Action {
    let target = lookahead_target(path, robot.position);
    steer_toward(target, robot, params)
}

/// Pick the tracking target: nearest waypoint, advanced forward while still
/// inside the lookahead circle.
pub fn lookahead_target(path: &WaypointPath, position: Vec2) -> Vec2 {
    let pts = &path.points;
    let mut nearest = 0;
    let mut best = f64::INFINITY;
    for (i, &p) in pts.iter().enumerate() {
        let d = position.distance(p);
        if d < best {
            best = d;
            nearest = i;
        }
    }
    let mut target = nearest;
    for i in nearest..pts.len() {
        if position.distance(pts[i]) <= LOOKAHEAD {
            target = i;
        } else if i > nearest {
            break;
        }
    }
    pts[target]
}

/// Convert a desired position into a clamped (linear, angular) command:
/// proportional turn, forward speed scaled by heading alignment and capped
/// so one step cannot overshoot the target.
pub fn steer_toward(target: Vec2, robot: &AgentState, params: &WorldParams) -> Action {
    let to_target = target - robot.position;
    let dist = to_target.norm();
    if dist < 1e-9 {
        return Action::STOP;
    }
    let err = wrap_angle(to_target.angle() - robot.heading);
    let angular = (err / params.dt).clamp(-params.omega_max, params.omega_max);
    let align = err.cos().max(0.0);
    let linear = (params.v_robot_max * align).min(dist / params.dt);
    Action::new(linear, angular)
}
