//! Continuous 2D geometry primitives: polygons, segments, rays, discs.
//!
//! Everything here is exact (up to f64) and independent of any grid; the
//! occupancy raster in [`crate::grid`] is derived from these predicates.

use crate::math::Vec2;

/// A simple polygon given as a ring of vertices (no closing repeat).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub points: Vec<Vec2>,
}

impl Polygon {
    pub fn new(points: Vec<Vec2>) -> Self {
        Polygon { points }
    }

    pub fn rectangle(center: Vec2, width: f64, height: f64) -> Self {
        let hw = width / 2.0;
        let hh = height / 2.0;
        Polygon::new(vec![
            Vec2::new(center.x - hw, center.y - hh),
            Vec2::new(center.x + hw, center.y - hh),
            Vec2::new(center.x + hw, center.y + hh),
            Vec2::new(center.x - hw, center.y + hh),
        ])
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.points.len();
        (0..n).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    /// Signed area (positive for counter-clockwise rings).
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        if n < 3 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            s += a.cross(b);
        }
        s / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Even-odd point containment; boundary points count as inside.
    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.points.len();
        if n < 3 {
            return false;
        }
        // Boundary check first so the crossing parity cannot misclassify
        // points lying exactly on an edge.
        for (a, b) in self.edges() {
            if point_segment_distance(p, a, b) == 0.0 {
                return true;
            }
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let t = (p.y - a.y) / (b.y - a.y);
                let x = a.x + t * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// True when no two non-adjacent edges intersect and no edge is
    /// degenerate. O(n^2); rings here are small.
    pub fn is_simple(&self) -> bool {
        let n = self.points.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            let (a1, a2) = (self.points[i], self.points[(i + 1) % n]);
            if (a2 - a1).norm_sq() == 0.0 {
                return false;
            }
            for j in (i + 1)..n {
                // Skip adjacent edges (they share a vertex by construction).
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (b1, b2) = (self.points[j], self.points[(j + 1) % n]);
                if segments_intersect(a1, a2, b1, b2) {
                    return false;
                }
            }
        }
        true
    }

    pub fn all_finite(&self) -> bool {
        self.points.iter().all(|p| p.is_finite())
    }

    /// Distance from a point to the polygon: 0 inside or on the boundary,
    /// else the distance to the nearest edge.
    pub fn distance(&self, p: Vec2) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Bounds { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Disc fully inside the rectangle (tangency counts as inside).
    pub fn contains_disc(&self, c: Vec2, r: f64) -> bool {
        c.x - self.min.x >= r && self.max.x - c.x >= r && c.y - self.min.y >= r && self.max.y - c.y >= r
    }

    /// Distance from an interior point to the rectangle boundary
    /// (negative outside).
    pub fn interior_clearance(&self, p: Vec2) -> f64 {
        (p.x - self.min.x)
            .min(self.max.x - p.x)
            .min(p.y - self.min.y)
            .min(self.max.y - p.y)
    }

    /// The four boundary edges as segments.
    pub fn edges(&self) -> [(Vec2, Vec2); 4] {
        let a = self.min;
        let b = Vec2::new(self.max.x, self.min.y);
        let c = self.max;
        let d = Vec2::new(self.min.x, self.max.y);
        [(a, b), (b, c), (c, d), (d, a)]
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.width() > 0.0 && self.height() > 0.0
    }
}

/// Distance from point `p` to segment `ab`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Proper or touching intersection of segments `a1a2` and `b1b2`.
pub fn segments_intersect(a1: Vec2, a2: Vec2, b1: Vec2, b2: Vec2) -> bool {
    let d1 = (a2 - a1).cross(b1 - a1);
    let d2 = (a2 - a1).cross(b2 - a1);
    let d3 = (b2 - b1).cross(a1 - b1);
    let d4 = (b2 - b1).cross(a2 - b1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Vec2, a: Vec2, b: Vec2, d: f64| d == 0.0 && point_segment_distance(p, a, b) == 0.0;
    on(b1, a1, a2, d1) || on(b2, a1, a2, d2) || on(a1, b1, b2, d3) || on(a2, b1, b2, d4)
}

/// Shortest distance between two segments.
pub fn segment_segment_distance(a1: Vec2, a2: Vec2, b1: Vec2, b2: Vec2) -> f64 {
    if segments_intersect(a1, a2, b1, b2) {
        return 0.0;
    }
    point_segment_distance(a1, b1, b2)
        .min(point_segment_distance(a2, b1, b2))
        .min(point_segment_distance(b1, a1, a2))
        .min(point_segment_distance(b2, a1, a2))
}

/// Parameter `t >= 0` of the first hit of ray `origin + t*dir` (unit `dir`)
/// against segment `ab`, if any.
pub fn ray_segment(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let v1 = origin - a;
    let v2 = b - a;
    let v3 = dir.perp();
    let denom = v2.dot(v3);
    if denom.abs() < 1e-15 {
        // Parallel; treat collinear overlap as hitting the nearer endpoint.
        if v2.cross(v1).abs() < 1e-15 {
            let ta = (a - origin).dot(dir);
            let tb = (b - origin).dot(dir);
            let t = ta.max(0.0).min(tb.max(0.0));
            if ta >= 0.0 || tb >= 0.0 {
                return Some(t);
            }
        }
        return None;
    }
    let t = v2.cross(v1) / denom;
    let s = v1.dot(v3) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&s) {
        Some(t)
    } else {
        None
    }
}

/// Parameter of the first hit of a ray against a circle, if any.
pub fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_sq() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = -b - sq;
    let t1 = -b + sq;
    if t0 >= 0.0 {
        Some(t0)
    } else if t1 >= 0.0 {
        // Origin inside the circle.
        Some(0.0)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_containment() {
        let sq = Polygon::rectangle(Vec2::new(0.0, 0.0), 2.0, 2.0);
        assert!(sq.contains(Vec2::ZERO));
        assert!(sq.contains(Vec2::new(1.0, 0.0))); // boundary
        assert!(!sq.contains(Vec2::new(1.1, 0.0)));
        assert!((sq.area() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn simple_vs_bowtie() {
        let sq = Polygon::rectangle(Vec2::ZERO, 1.0, 1.0);
        assert!(sq.is_simple());
        let bowtie = Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ]);
        assert!(!bowtie.is_simple());
    }

    #[test]
    fn ray_hits_wall() {
        let t = ray_segment(
            Vec2::ZERO,
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, -1.0),
            Vec2::new(2.0, 1.0),
        );
        assert!((t.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ray_hits_circle() {
        let t = ray_circle(Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(3.0, 0.0), 0.3);
        assert!((t.unwrap() - 2.7).abs() < 1e-12);
        assert!(ray_circle(Vec2::ZERO, Vec2::new(0.0, 1.0), Vec2::new(3.0, 0.0), 0.3).is_none());
    }

    #[test]
    fn segment_distance_parallel() {
        let d = segment_segment_distance(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
        );
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polygon_distance_outside() {
        let sq = Polygon::rectangle(Vec2::ZERO, 2.0, 2.0);
        assert!((sq.distance(Vec2::new(3.0, 0.0)) - 2.0).abs() < 1e-12);
        assert_eq!(sq.distance(Vec2::new(0.5, 0.5)), 0.0);
    }
}
