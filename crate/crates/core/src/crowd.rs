//! Reciprocal velocity-obstacle crowd simulation.
//!
//! Each agent builds one half-plane constraint per neighbor (both agents
//! take half of the minimal correction, so avoidance effort is shared) and
//! picks the feasible velocity closest to its preferred one by an
//! incremental two-dimensional linear program. When the constraints admit
//! no velocity at all, a fallback program returns the velocity minimizing
//! the worst violation. Humans walk waypoint paths between their two goals,
//! pausing on arrival and stopping for good after the second.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::Vec2;
use crate::params::WorldParams;
use crate::planners::{astar_plan, lookahead_target, WaypointPath};
use crate::scene::{AgentState, Pose, Scene};

const LP_EPS: f64 = 1e-10;
/// Humans replan their waypoint path after drifting this far off it (m).
const REPLAN_DRIFT: f64 = 1.0;
/// Arrival radius around a human goal (m).
pub const ARRIVAL_RADIUS: f64 = 0.2;
/// Clockwise preferred-velocity bias (rad) applied only while in conflict.
/// Exactly mirrored head-on encounters otherwise produce purely axial
/// corrections — both agents brake forever instead of sidestepping. A
/// shared pass-on-one-side convention breaks the tie antisymmetrically, so
/// the pair still mirrors exactly.
pub const PASS_BIAS: f64 = 0.02;

/// Velocity-space half-plane `{v : (v − point)·normal ≥ 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrcaConstraint {
    pub point: Vec2,
    pub normal: Vec2,
}

impl OrcaConstraint {
    /// Signed margin: negative when `v` is on the forbidden side.
    pub fn margin(&self, v: Vec2) -> f64 {
        (v - self.point).dot(self.normal)
    }

    /// How far `v` sits inside the forbidden side (0 when satisfied).
    pub fn violation(&self, v: Vec2) -> f64 {
        (-self.margin(v)).max(0.0)
    }

    /// Boundary direction such that the feasible side lies to its left.
    fn direction(&self) -> Vec2 {
        Vec2::new(self.normal.y, -self.normal.x)
    }
}

/// Half-plane for agent `a` against neighbor `b`: the velocities `a` may
/// keep so that, with `b` doing its half, the pair stays collision-free for
/// the next `tau` seconds. Already-overlapping discs get a constraint that
/// separates them within one `dt` step. Coincident centers separate along a
/// direction fixed by id order.
pub fn orca_pair(
    a_id: usize,
    a: &AgentState,
    b_id: usize,
    b: &AgentState,
    tau: f64,
    dt: f64,
) -> OrcaConstraint {
    let mut rel_pos = b.position - a.position;
    if rel_pos.norm_sq() < 1e-18 {
        let sign = if a_id < b_id { 1.0 } else { -1.0 };
        rel_pos = Vec2::new(sign * 1e-9, 0.0);
    }
    let rel_vel = a.velocity - b.velocity;
    let dist_sq = rel_pos.norm_sq();
    let r = a.radius + b.radius;
    let r_sq = r * r;

    let dir;
    let u;
    if dist_sq > r_sq {
        // Relative velocities inside the truncated cone collide within tau.
        let w = rel_vel - rel_pos / tau;
        let w_len_sq = w.norm_sq();
        let dot1 = w.dot(rel_pos);
        if dot1 < 0.0 && dot1 * dot1 > r_sq * w_len_sq {
            // Closest exit is through the cone's cutoff arc.
            let w_len = w_len_sq.sqrt();
            let unit_w = w / w_len;
            dir = Vec2::new(unit_w.y, -unit_w.x);
            u = unit_w * (r / tau - w_len);
        } else {
            // Closest exit is through one of the cone legs.
            let leg = (dist_sq - r_sq).sqrt();
            if rel_pos.cross(w) > 0.0 {
                dir = Vec2::new(
                    rel_pos.x * leg - rel_pos.y * r,
                    rel_pos.x * r + rel_pos.y * leg,
                ) / dist_sq;
            } else {
                dir = -Vec2::new(
                    rel_pos.x * leg + rel_pos.y * r,
                    -rel_pos.x * r + rel_pos.y * leg,
                ) / dist_sq;
            }
            let dot2 = rel_vel.dot(dir);
            u = dir * dot2 - rel_vel;
        }
    } else {
        // Discs overlap: demand enough relative retreat to clear within dt.
        let inv_dt = 1.0 / dt;
        let w = rel_vel - rel_pos * inv_dt;
        let w_len = w.norm();
        let unit_w = if w_len > 1e-12 { w / w_len } else { -rel_pos.normalized_or_zero() };
        dir = Vec2::new(unit_w.y, -unit_w.x);
        u = unit_w * (r * inv_dt - w_len);
    }
    // A neighbor that is not moving cannot contribute its reciprocal half
    // of the correction — paused or arrived humans, a parked robot — so
    // the moving agent takes the whole effort. True pairs split it evenly.
    let share = if b.velocity.norm_sq() < 1e-18 { 1.0 } else { 0.5 };
    OrcaConstraint {
        point: a.velocity + u * share,
        normal: Vec2::new(-dir.y, dir.x),
    }
}

/// One constraint per sensed neighbor: within `d_neighbor`, nearest first,
/// capped at `max_neighbors`.
pub fn orca_halfplanes(
    self_id: usize,
    this: &AgentState,
    others: &[(usize, AgentState)],
    tau: f64,
    d_neighbor: f64,
    max_neighbors: usize,
    dt: f64,
) -> Vec<OrcaConstraint> {
    let mut nearby: Vec<(f64, usize, &AgentState)> = others
        .iter()
        .filter(|(id, _)| *id != self_id)
        .map(|(id, s)| (this.position.distance(s.position), *id, s))
        .filter(|(d, _, _)| *d <= d_neighbor)
        .collect();
    nearby.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    nearby.truncate(max_neighbors);
    nearby
        .into_iter()
        .map(|(_, id, s)| orca_pair(self_id, this, id, s, tau, dt))
        .collect()
}

#[derive(Clone, Copy)]
struct Line {
    point: Vec2,
    dir: Vec2,
}

impl Line {
    fn from_constraint(c: &OrcaConstraint) -> Line {
        Line { point: c.point, dir: c.direction() }
    }

    fn violated_by(&self, v: Vec2) -> bool {
        self.dir.cross(self.point - v) > 0.0
    }
}

/// Feasible velocity within the speed disc closest to `v_pref`; when the
/// constraints are jointly infeasible, the velocity minimizing the largest
/// violation. The result never exceeds `v_max` in norm.
pub fn solve_velocity_program(
    constraints: &[OrcaConstraint],
    v_pref: Vec2,
    v_max: f64,
) -> Vec2 {
    let lines: Vec<Line> = constraints.iter().map(Line::from_constraint).collect();
    let mut result = Vec2::ZERO;
    let fail = lp2(&lines, v_max, v_pref, false, &mut result);
    if fail < lines.len() {
        lp3(&lines, fail, v_max, &mut result);
    }
    result
}

/// Optimize along line `line_no` subject to the disc and lines `0..line_no`.
fn lp1(
    lines: &[Line],
    line_no: usize,
    radius: f64,
    opt_v: Vec2,
    dir_opt: bool,
    result: &mut Vec2,
) -> bool {
    let line = &lines[line_no];
    let dot = line.point.dot(line.dir);
    let disc = dot * dot + radius * radius - line.point.norm_sq();
    if disc < 0.0 {
        // The line misses the speed disc entirely.
        return false;
    }
    let sqrt_disc = disc.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;
    for prev in &lines[..line_no] {
        let denom = line.dir.cross(prev.dir);
        let numer = prev.dir.cross(line.point - prev.point);
        if denom.abs() <= LP_EPS {
            // Parallel: either redundant or contradictory.
            if numer < 0.0 {
                return false;
            }
            continue;
        }
        let t = numer / denom;
        if denom >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return false;
        }
    }
    let t = if dir_opt {
        // Maximize progress along the optimization direction.
        if opt_v.dot(line.dir) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        (line.dir.dot(opt_v - line.point)).clamp(t_left, t_right)
    };
    *result = line.point + line.dir * t;
    true
}

/// Incremental 2D LP over all lines; returns `lines.len()` on success or
/// the index of the first line that made the program infeasible.
fn lp2(lines: &[Line], radius: f64, opt_v: Vec2, dir_opt: bool, result: &mut Vec2) -> usize {
    *result = if dir_opt {
        // opt_v is a unit direction: start at the disc edge.
        opt_v * radius
    } else if opt_v.norm_sq() > radius * radius {
        opt_v.normalized_or_zero() * radius
    } else {
        opt_v
    };
    for (i, line) in lines.iter().enumerate() {
        if line.violated_by(*result) {
            let saved = *result;
            if !lp1(lines, i, radius, opt_v, dir_opt, result) {
                *result = saved;
                return i;
            }
        }
    }
    lines.len()
}

/// Least-violation fallback: starting from the first infeasible line, slide
/// the result in the direction that equalizes and minimizes the worst
/// violation over all lines seen so far.
fn lp3(lines: &[Line], begin: usize, radius: f64, result: &mut Vec2) {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        if lines[i].dir.cross(lines[i].point - *result) > distance {
            let mut proj: Vec<Line> = Vec::with_capacity(i);
            for j in 0..i {
                let denom = lines[i].dir.cross(lines[j].dir);
                let point = if denom.abs() <= LP_EPS {
                    if lines[i].dir.dot(lines[j].dir) > 0.0 {
                        continue; // same direction: line j is redundant here
                    }
                    (lines[i].point + lines[j].point) * 0.5
                } else {
                    lines[i].point
                        + lines[i].dir * (lines[j].dir.cross(lines[i].point - lines[j].point) / denom)
                };
                let dir = (lines[j].dir - lines[i].dir).normalized_or_zero();
                proj.push(Line { point, dir });
            }
            let saved = *result;
            let toward = Vec2::new(-lines[i].dir.y, lines[i].dir.x);
            if lp2(&proj, radius, toward, true, result) < proj.len() {
                // Numerically unreachable by construction; keep the best so far.
                *result = saved;
            }
            distance = lines[i].dir.cross(lines[i].point - *result);
        }
    }
}

/// Scripted per-human task state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Moving,
    /// Steps of rest remaining before walking resumes.
    Paused(u32),
    Done,
}

/// Per-episode description of one human: spawn pose, two goals visited in
/// order, walking speed as a fraction of the robot's max, rest-length bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanSpec {
    pub start: Pose,
    pub goals: [Vec2; 2],
    pub speed_factor: f64,
    /// Upper bound (inclusive) of the uniform pause draw at goal arrival.
    pub pause_steps: u32,
    pub radius: f64,
}

impl HumanSpec {
    pub fn speed(&self, params: &WorldParams) -> f64 {
        self.speed_factor * params.v_robot_max
    }
}

/// Live state of one human.
#[derive(Debug, Clone)]
pub struct HumanRuntime {
    pub id: usize,
    pub spec: HumanSpec,
    pub state: AgentState,
    pub active_goal_index: usize,
    pub phase: Phase,
    pub path: Option<WaypointPath>,
}

impl HumanRuntime {
    pub fn spawn(id: usize, spec: HumanSpec) -> HumanRuntime {
        let state = AgentState::at_rest(spec.start.position, spec.start.heading, spec.radius);
        HumanRuntime { id, spec, state, active_goal_index: 0, phase: Phase::Moving, path: None }
    }

    pub fn active_goal(&self) -> Vec2 {
        self.spec.goals[self.active_goal_index]
    }
}

/// What happened to a human during one step, for event logging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HumanStepOutcome {
    /// Arrived at goal 1 and flipped to goal 2.
    pub switched_goal: bool,
    /// Could not plan to its goal and gave up (generation should prevent this).
    pub stuck: bool,
}

/// Agent id the robot uses in crowd snapshots.
pub const ROBOT_ID: usize = usize::MAX;

/// Margin kept between body surfaces when a step gets contact-clamped, so
/// recorded distances stay strictly above the collision threshold.
const CONTACT_EPS: f64 = 1e-6;

/// Largest prefix of the segment `p -> q` whose endpoint keeps a body of
/// `radius` clear of every occupied disc. A body already inside a disc's
/// contact shell may still move, but never to an endpoint closer than where
/// it started. Falls back to `p` when the shortened endpoint — which lies on
/// the chord, not on the slid path — would clip static geometry.
fn clamp_to_discs(
    p: Vec2,
    q: Vec2,
    own_id: usize,
    radius: f64,
    occupied: &[(usize, Vec2, f64)],
    scene: &Scene,
) -> Vec2 {
    let u = q - p;
    if u.norm_sq() == 0.0 {
        return q;
    }
    let mut s_max = 1.0f64;
    for &(id, center, r) in occupied {
        if id == own_id {
            continue;
        }
        let w = p - center;
        let keep = (radius + r + CONTACT_EPS).min(w.norm());
        let a = u.norm_sq();
        let b = 2.0 * w.dot(u);
        let c = (w.norm_sq() - keep * keep).max(0.0);
        let disc = b * b - 4.0 * a * c;
        if disc <= 0.0 {
            continue;
        }
        let s_enter = (-b - disc.sqrt()) / (2.0 * a);
        if s_enter <= 0.0 {
            // Touching the shell already: heading inward pins the step,
            // tangent or outward motion is free.
            if c == 0.0 && b < 0.0 {
                s_max = 0.0;
            }
            continue;
        }
        s_max = s_max.min(s_enter);
    }
    if s_max >= 1.0 {
        return q;
    }
    if s_max <= 0.0 {
        return p;
    }
    let e = p + u * s_max;
    if scene.static_clearance(e) < radius {
        p
    } else {
        e
    }
}

/// Advance the whole crowd one step. Decisions are simultaneous — every
/// human plans against the same pre-step snapshot, robot included — but
/// positions integrate sequentially, each mover honoring the bodies that
/// have already landed. That makes "two humans never end a step
/// overlapping" a hard property of the world, not a hope pinned on the
/// avoidance program's constant-velocity assumption, which breaks whenever
/// a neighbor halts at its goal mid-plan. Outcomes align with input order.
pub fn crowd_step(
    humans: &[HumanRuntime],
    robot: &AgentState,
    scene: &Scene,
    rng: &mut ChaCha8Rng,
    params: &WorldParams,
) -> (Vec<HumanRuntime>, Vec<HumanStepOutcome>) {
    let mut snapshot: Vec<(usize, AgentState)> =
        humans.iter().map(|h| (h.id, h.state)).collect();
    snapshot.push((ROBOT_ID, *robot));
    let mut occupied: Vec<(usize, Vec2, f64)> = humans
        .iter()
        .map(|h| (h.id, h.state.position, h.spec.radius))
        .collect();
    occupied.push((ROBOT_ID, robot.position, robot.radius));

    let mut next = Vec::with_capacity(humans.len());
    let mut outcomes = Vec::with_capacity(humans.len());
    for (i, h) in humans.iter().enumerate() {
        let (h2, outcome) = human_step(h, scene, &snapshot, &occupied, rng, params);
        occupied[i].1 = h2.state.position;
        next.push(h2);
        outcomes.push(outcome);
    }
    (next, outcomes)
}

/// Advance one human by `dt` against a frozen snapshot of the other agents.
/// Preferred velocity tracks the waypoint path toward the active goal; the
/// actual velocity solves the avoidance program over sensed neighbors.
pub fn human_step(
    rt: &HumanRuntime,
    scene: &Scene,
    others: &[(usize, AgentState)],
    rng: &mut ChaCha8Rng,
    params: &WorldParams,
) -> (HumanRuntime, HumanStepOutcome) {
    let mut next = rt.clone();
    let mut outcome = HumanStepOutcome::default();
    match rt.phase {
        Phase::Done => {
            next.state.velocity = Vec2::ZERO;
            return (next, outcome);
        }
        Phase::Paused(remaining) => {
            next.state.velocity = Vec2::ZERO;
            next.phase = if remaining > 1 { Phase::Paused(remaining - 1) } else { Phase::Moving };
            return (next, outcome);
        }
        Phase::Moving => {}
    }

    let goal = rt.active_goal();
    if rt.state.position.distance(goal) <= ARRIVAL_RADIUS {
        next.state.velocity = Vec2::ZERO;
        if rt.active_goal_index == 0 {
            next.active_goal_index = 1;
            next.path = None;
            let pause = rng.gen_range(0..=rt.spec.pause_steps);
            next.phase = if pause > 0 { Phase::Paused(pause) } else { Phase::Moving };
            outcome.switched_goal = true;
        } else {
            next.phase = Phase::Done;
        }
        return (next, outcome);
    }

    // (Re)plan when there is no path, the goal changed, or we drifted off.
    let needs_plan = match &rt.path {
        None => true,
        Some(p) => p.goal() != goal || p.distance_to(rt.state.position) > REPLAN_DRIFT,
    };
    if needs_plan {
        match astar_plan(scene, rt.state.position, goal, rt.spec.radius) {
            Some(p) => next.path = Some(p),
            None => {
                next.phase = Phase::Done;
                next.state.velocity = Vec2::ZERO;
                outcome.stuck = true;
                return (next, outcome);
            }
        }
    }

    let path = next.path.as_ref().expect("planned above");
    let target = lookahead_target(path, rt.state.position);
    let to_target = target - rt.state.position;
    let dir = if to_target.norm() > 1e-9 {
        to_target.normalized_or_zero()
    } else {
        (goal - rt.state.position).normalized_or_zero()
    };
    let speed_cap = rt.spec.speed(params);
    let speed = speed_cap.min(rt.state.position.distance(goal) / params.dt);
    let mut v_pref = dir * speed;

    let constraints = orca_halfplanes(
        rt.id,
        &rt.state,
        others,
        params.orca.tau,
        params.orca.d_neighbor,
        params.orca.max_neighbors,
        params.dt,
    );
    if constraints.iter().any(|c| c.violation(v_pref) > 0.0) {
        v_pref = v_pref.rotated(-PASS_BIAS);
    }
    let v = solve_velocity_program(&constraints, v_pref, speed_cap);
    let (pos, _hit) = scene.slide_move(rt.state.position, rt.state.position + v * params.dt, rt.spec.radius);
    next.state.velocity = (pos - rt.state.position) / params.dt;
    next.state.position = pos;
    if next.state.velocity.norm() > 1e-9 {
        next.state.heading = next.state.velocity.angle();
    }
    (next, outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn agent(px: f64, py: f64, vx: f64, vy: f64, r: f64) -> AgentState {
        AgentState {
            position: Vec2::new(px, py),
            velocity: Vec2::new(vx, vy),
            heading: 0.0,
            radius: r,
        }
    }

    #[test]
    fn lp_empty_constraints() {
        let v = solve_velocity_program(&[], Vec2::new(0.3, 0.4), 1.0);
        assert_eq!(v, Vec2::new(0.3, 0.4));
        let v = solve_velocity_program(&[], Vec2::new(3.0, 4.0), 1.0);
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert!((v.x - 0.6).abs() < 1e-12 && (v.y - 0.8).abs() < 1e-12);
    }

    #[test]
    fn lp_single_halfplane_projection() {
        // Forbid the right half: v·(-1,0) ≥ 0.4 → v.x ≤ -0.4.
        let c = OrcaConstraint { point: Vec2::new(-0.4, 0.0), normal: Vec2::new(-1.0, 0.0) };
        let v_pref = Vec2::new(0.8, 0.1);
        let v = solve_velocity_program(&[c], v_pref, 1.0);
        // Closest point on the boundary x = −0.4 keeps the y component.
        assert!((v.x + 0.4).abs() < 1e-9);
        assert!((v.y - 0.1).abs() < 1e-9);
        // Dense-grid check on the objective.
        let mut best = f64::INFINITY;
        let n = 2001;
        for iy in 0..n {
            for ix in 0..n {
                let cand = Vec2::new(-1.0 + 2.0 * ix as f64 / (n - 1) as f64,
                                     -1.0 + 2.0 * iy as f64 / (n - 1) as f64);
                if cand.norm_sq() <= 1.0 && c.violation(cand) == 0.0 {
                    best = best.min(cand.distance(v_pref));
                }
            }
        }
        assert!((v.distance(v_pref) - best).abs() < 1e-3);
    }

    #[test]
    fn far_neighbor_constraint_inactive() {
        let a = agent(0.0, 0.0, 0.0, 0.0, 0.3);
        let b = agent(10.0, 0.0, 0.0, 0.0, 0.3);
        let c = orca_pair(0, &a, 1, &b, 2.0, 0.25);
        for k in 0..360 {
            let th = k as f64 * std::f64::consts::PI / 180.0;
            for speed in [0.5, 1.0, 1.5] {
                let v = Vec2::from_angle(th) * speed;
                assert_eq!(c.violation(v), 0.0, "violated at {v:?}");
            }
        }
    }

    #[test]
    fn constraints_mirror_under_reflection() {
        let a = agent(0.0, 0.0, 0.4, 0.2, 0.3);
        let b = agent(1.5, 0.8, -0.3, 0.1, 0.3);
        let am = agent(0.0, 0.0, 0.4, -0.2, 0.3);
        let bm = agent(1.5, -0.8, -0.3, -0.1, 0.3);
        let c = orca_pair(0, &a, 1, &b, 2.0, 0.25);
        let cm = orca_pair(0, &am, 1, &bm, 2.0, 0.25);
        assert!((c.point.x - cm.point.x).abs() < 1e-15);
        assert!((c.point.y + cm.point.y).abs() < 1e-15);
        assert!((c.normal.x - cm.normal.x).abs() < 1e-15);
        assert!((c.normal.y + cm.normal.y).abs() < 1e-15);
    }

    #[test]
    fn reciprocity_exact_mirror() {
        let a = agent(-1.0, 0.0, 1.0, 0.0, 0.3);
        let b = agent(1.0, 0.0, -1.0, 0.0, 0.3);
        let tau = 2.0;
        let ca = orca_pair(0, &a, 1, &b, tau, 0.25);
        let cb = orca_pair(1, &b, 0, &a, tau, 0.25);
        let va = solve_velocity_program(&[ca], Vec2::new(1.0, 0.0), 1.0);
        let vb = solve_velocity_program(&[cb], Vec2::new(-1.0, 0.0), 1.0);
        assert_eq!(va.x, -vb.x);
        assert_eq!(va.y, -vb.y);
        assert!(va.norm() <= 1.0 + 1e-9);
    }

    #[test]
    fn overlap_produces_separating_constraint() {
        let a = agent(0.0, 0.0, 0.0, 0.0, 0.3);
        let b = agent(0.2, 0.0, 0.0, 0.0, 0.3);
        let ca = orca_pair(0, &a, 1, &b, 2.0, 0.25);
        let va = solve_velocity_program(&[ca], Vec2::ZERO, 1.0);
        assert!(va.x < -1e-3, "agent should retreat, got {va:?}");
        // Coincident centers: id order decides direction, exactly opposed.
        let c0 = orca_pair(0, &a, 1, &agent(0.0, 0.0, 0.0, 0.0, 0.3), 2.0, 0.25);
        let c1 = orca_pair(1, &agent(0.0, 0.0, 0.0, 0.0, 0.3), 0, &a, 2.0, 0.25);
        let v0 = solve_velocity_program(&[c0], Vec2::ZERO, 1.0);
        let v1 = solve_velocity_program(&[c1], Vec2::ZERO, 1.0);
        assert!(v0.x < 0.0 && v1.x > 0.0);
        assert!((v0.x + v1.x).abs() < 1e-12);
    }

    #[test]
    fn head_on_swap_stays_safe() {
        let scene = Scene::empty_room("arena", 20.0, 20.0, 0.1);
        let params = WorldParams::default();
        let spec_a = HumanSpec {
            start: Pose::new(Vec2::new(6.0, 10.0), 0.0),
            goals: [Vec2::new(14.0, 10.0), Vec2::new(14.0, 10.0)],
            speed_factor: 1.0,
            pause_steps: 0,
            radius: 0.3,
        };
        let spec_b = HumanSpec {
            start: Pose::new(Vec2::new(14.0, 10.0), 0.0),
            goals: [Vec2::new(6.0, 10.0), Vec2::new(6.0, 10.0)],
            speed_factor: 1.0,
            pause_steps: 0,
            radius: 0.3,
        };
        let mut humans = vec![HumanRuntime::spawn(0, spec_a), HumanRuntime::spawn(1, spec_b)];
        let mut rng = stream(7, "crowd");
        let mut min_dist = f64::INFINITY;
        let mut max_lateral = 0.0_f64;
        for _ in 0..200 {
            let snapshot: Vec<(usize, AgentState)> =
                humans.iter().map(|h| (h.id, h.state)).collect();
            let mut next = Vec::with_capacity(humans.len());
            for h in &humans {
                let (h2, _) = human_step(h, &scene, &snapshot, &mut rng, &params);
                next.push(h2);
            }
            humans = next;
            let d = humans[0].state.position.distance(humans[1].state.position);
            min_dist = min_dist.min(d);
            max_lateral = max_lateral
                .max((humans[0].state.position.y - 10.0).abs())
                .max((humans[1].state.position.y - 10.0).abs());
        }
        assert!(min_dist >= 0.6, "closest approach {min_dist}");
        assert!(max_lateral > 0.05, "agents should sidestep, got {max_lateral}");
        // Both swapped sides.
        assert!(humans[0].state.position.distance(Vec2::new(14.0, 10.0)) < 0.5);
        assert!(humans[1].state.position.distance(Vec2::new(6.0, 10.0)) < 0.5);
    }

    #[test]
    fn standing_neighbor_gets_full_avoidance_effort() {
        // Identical geometry up to an immeasurable neighbor velocity: the
        // constraint point must shift twice as far against the standing
        // neighbor as against the (barely) moving one.
        let a = agent(0.0, 0.0, 1.0, 0.0, 0.3);
        let standing = agent(1.5, 0.0, 0.0, 0.0, 0.3);
        let crawling = agent(1.5, 0.0, 1e-8, 0.0, 0.3);
        let c_static = orca_pair(0, &a, 1, &standing, 2.0, 0.25);
        let c_crawl = orca_pair(0, &a, 1, &crawling, 2.0, 0.25);
        let shift_static = (c_static.point - a.velocity).norm();
        let shift_crawl = (c_crawl.point - a.velocity).norm();
        assert!(shift_static > 1e-3, "head-on approach must be constrained");
        assert!(
            (shift_static - 2.0 * shift_crawl).abs() < 1e-6,
            "full vs half share: {shift_static} vs {shift_crawl}"
        );

        // Behavior: a walker whose goal lies one meter behind a standing
        // human must stall at contact distance, never push through it.
        let scene = Scene::empty_room("arena", 20.0, 20.0, 0.1);
        let params = WorldParams::default();
        let walker_spec = HumanSpec {
            start: Pose::new(Vec2::new(6.0, 10.0), 0.0),
            goals: [Vec2::new(11.0, 10.0), Vec2::new(11.0, 10.0)],
            speed_factor: 1.0,
            pause_steps: 0,
            radius: 0.3,
        };
        let stander_spec = HumanSpec {
            start: Pose::new(Vec2::new(10.9, 10.0), 0.0),
            goals: [Vec2::new(10.9, 10.0), Vec2::new(10.9, 10.0)],
            speed_factor: 1.0,
            pause_steps: 0,
            radius: 0.3,
        };
        let mut walker = HumanRuntime::spawn(0, walker_spec);
        let mut stander = HumanRuntime::spawn(1, stander_spec);
        stander.phase = Phase::Done;
        let mut rng = stream(11, "crowd");
        let mut min_dist = f64::INFINITY;
        for _ in 0..200 {
            let snapshot = vec![(walker.id, walker.state), (stander.id, stander.state)];
            let (w2, _) = human_step(&walker, &scene, &snapshot, &mut rng, &params);
            let (s2, _) = human_step(&stander, &scene, &snapshot, &mut rng, &params);
            walker = w2;
            stander = s2;
            min_dist = min_dist.min(walker.state.position.distance(stander.state.position));
        }
        assert!(min_dist >= 0.6 - 1e-9, "walker penetrated to {min_dist}");
    }

    #[test]
    fn free_corridor_advances_at_speed() {
        let scene = Scene::empty_room("hall", 20.0, 6.0, 0.1);
        let params = WorldParams::default();
        let spec = HumanSpec {
            start: Pose::new(Vec2::new(2.0, 3.0), 0.0),
            goals: [Vec2::new(18.0, 3.0), Vec2::new(2.0, 3.0)],
            speed_factor: 1.0,
            pause_steps: 0,
            radius: 0.3,
        };
        let rt = HumanRuntime::spawn(0, spec);
        let mut rng = stream(1, "crowd");
        let snapshot = vec![(0, rt.state)];
        let (next, out) = human_step(&rt, &scene, &snapshot, &mut rng, &params);
        assert_eq!(out, HumanStepOutcome::default());
        assert!((next.state.position.x - 2.25).abs() < 1e-9);
        assert!((next.state.position.y - 3.0).abs() < 1e-9);
    }

    #[test]
    fn done_humans_never_move() {
        let scene = Scene::empty_room("hall", 10.0, 10.0, 0.1);
        let params = WorldParams::default();
        let spec = HumanSpec {
            start: Pose::new(Vec2::new(5.0, 5.0), 0.0),
            goals: [Vec2::new(7.0, 5.0), Vec2::new(3.0, 5.0)],
            speed_factor: 1.0,
            pause_steps: 10,
            radius: 0.3,
        };
        let mut rt = HumanRuntime::spawn(0, spec);
        rt.phase = Phase::Done;
        let mut rng = stream(2, "crowd");
        let snapshot = vec![(0, rt.state)];
        let (next, _) = human_step(&rt, &scene, &snapshot, &mut rng, &params);
        assert_eq!(next.state.position, rt.state.position);
        assert_eq!(next.state.velocity, Vec2::ZERO);
        assert_eq!(next.phase, Phase::Done);
    }

    #[test]
    fn goal_cycle_start_g1_pause_g2_done() {
        let scene = Scene::empty_room("hall", 20.0, 6.0, 0.1);
        let params = WorldParams::default();
        let spec = HumanSpec {
            start: Pose::new(Vec2::new(2.0, 3.0), 0.0),
            goals: [Vec2::new(5.0, 3.0), Vec2::new(8.0, 3.0)],
            speed_factor: 1.0,
            pause_steps: 6,
            radius: 0.3,
        };
        let mut rt = HumanRuntime::spawn(0, spec);
        let mut rng = stream(3, "crowd");
        let mut switched = 0;
        let mut paused_seen = false;
        for _ in 0..200 {
            let snapshot = vec![(0, rt.state)];
            let (next, out) = human_step(&rt, &scene, &snapshot, &mut rng, &params);
            if out.switched_goal {
                switched += 1;
            }
            if matches!(next.phase, Phase::Paused(_)) {
                paused_seen = true;
            }
            rt = next;
            if rt.phase == Phase::Done {
                break;
            }
        }
        assert_eq!(switched, 1);
        assert!(paused_seen || switched == 1);
        assert_eq!(rt.phase, Phase::Done);
        assert!(rt.state.position.distance(Vec2::new(8.0, 3.0)) <= ARRIVAL_RADIUS + 1e-9);
    }
}
