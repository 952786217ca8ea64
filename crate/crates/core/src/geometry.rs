//! Planar geometry kernel shared by the rule checks and metrics.
//!
//! All predicates are closed: touching boxes overlap, points on a ring
//! boundary are contained. Degenerate cases are decided against a single
//! tolerance, [`EPS`].

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

/// Tolerance for degenerate predicates (collinearity, touching, zero length).
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn lerp(self, o: Vec2, s: f64) -> Vec2 {
        self + (o - self) * s
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<(f64, f64)> for Vec2 {
    fn from((x, y): (f64, f64)) -> Self {
        Vec2::new(x, y)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Signed shortest-arc difference `to - from`, in (-pi, pi].
pub fn angle_diff(to: f64, from: f64) -> f64 {
    normalize_angle(to - from)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec2,
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(center: Vec2, yaw: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            yaw,
            length,
            width,
        }
    }

    /// Unit axes: forward (along length) and left (along width).
    pub fn axes(&self) -> [Vec2; 2] {
        let f = Vec2::from_angle(self.yaw);
        [f, f.perp()]
    }

    fn half_extents(&self) -> [f64; 2] {
        [0.5 * self.length, 0.5 * self.width]
    }

    /// Corners in counter-clockwise order starting front-left.
    pub fn corners(&self) -> [Vec2; 4] {
        let [f, l] = self.axes();
        let [hl, hw] = self.half_extents();
        let c = self.center;
        [
            c + f * hl + l * hw,
            c - f * hl + l * hw,
            c - f * hl - l * hw,
            c + f * hl - l * hw,
        ]
    }

    /// Radius of the projection of this box onto a unit axis.
    fn projected_radius(&self, axis: Vec2) -> f64 {
        let [f, l] = self.axes();
        let [hl, hw] = self.half_extents();
        hl * f.dot(axis).abs() + hw * l.dot(axis).abs()
    }

    /// The four candidate separating axes of a box pair.
    fn sat_axes(&self, other: &OrientedBox) -> [Vec2; 4] {
        let [a0, a1] = self.axes();
        let [b0, b1] = other.axes();
        [a0, a1, b0, b1]
    }

    /// Largest separating gap over the SAT axes. Non-positive means overlap.
    pub fn separation(&self, other: &OrientedBox) -> f64 {
        let d = other.center - self.center;
        self.sat_axes(other)
            .iter()
            .map(|&ax| d.dot(ax).abs() - self.projected_radius(ax) - other.projected_radius(ax))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Closed overlap test by the separating-axis theorem; touching overlaps.
pub fn boxes_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    a.separation(b) <= EPS
}

/// Earliest fraction `s` in `[0, 1]` at which two boxes translating linearly
/// from `(a0, b0)` to `(a1, b1)` overlap. Each box keeps its start yaw for the
/// whole sweep, so the SAT gap on every axis is affine in `s`.
pub fn swept_overlap(a0: &OrientedBox, a1: &OrientedBox, b0: &OrientedBox, b1: &OrientedBox) -> Option<f64> {
    let da = a1.center - a0.center;
    let db = b1.center - b0.center;
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for ax in a0.sat_axes(b0) {
        let reach = a0.projected_radius(ax) + b0.projected_radius(ax) + EPS;
        // centre offset along the axis: p(s) = p0 + v s, overlap while |p| <= reach
        let p0 = (b0.center - a0.center).dot(ax);
        let v = (db - da).dot(ax);
        if v.abs() < 1e-15 {
            if p0.abs() > reach {
                return None;
            }
            continue;
        }
        let s1 = (-reach - p0) / v;
        let s2 = (reach - p0) / v;
        let (enter, exit) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        lo = lo.max(enter);
        hi = hi.min(exit);
        if lo > hi {
            return None;
        }
    }
    Some(lo)
}

/// Closed ring of vertices; the closing edge is implicit (first != last is
/// fine, a repeated closing vertex is dropped on construction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring(pub Vec<Vec2>);

impl Ring {
    pub fn new(mut pts: Vec<Vec2>) -> Self {
        if pts.len() > 1 && pts.first() == pts.last() {
            pts.pop();
        }
        Ring(pts)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.0
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.0.len();
        (0..n).map(move |i| (self.0[i], self.0[(i + 1) % n]))
    }

    /// Number of pairwise-distinct vertices.
    pub fn distinct_vertices(&self) -> usize {
        let mut seen: Vec<Vec2> = Vec::with_capacity(self.0.len());
        for &p in &self.0 {
            if !seen.iter().any(|q| q.dist(p) <= EPS) {
                seen.push(p);
            }
        }
        seen.len()
    }

    pub fn on_boundary(&self, p: Vec2) -> bool {
        self.edges().any(|(a, b)| point_segment_distance(p, a, b) <= EPS)
    }

    /// Even-odd crossing test, boundary excluded (callers check it first).
    fn crossings_odd(&self, p: Vec2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.on_boundary(p) || self.crossings_odd(p)
    }

    /// Strict interior: inside and not on the boundary.
    pub fn contains_strict(&self, p: Vec2) -> bool {
        !self.on_boundary(p) && self.crossings_odd(p)
    }

    pub fn map(&self, f: impl Fn(Vec2) -> Vec2) -> Ring {
        Ring(self.0.iter().map(|&p| f(p)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub outer: Ring,
    #[serde(default)]
    pub holes: Vec<Ring>,
}

impl Polygon {
    pub fn new(outer: Ring, holes: Vec<Ring>) -> Self {
        Self { outer, holes }
    }

    /// Closed containment: inside the outer ring and not strictly inside a hole.
    pub fn contains(&self, p: Vec2) -> bool {
        self.outer.contains(p) && !self.holes.iter().any(|h| h.contains_strict(p))
    }
}

pub fn point_in_polygon(p: Vec2, poly: &Polygon) -> bool {
    poly.contains(p)
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sq();
    if len2 <= EPS * EPS {
        return p.dist(a);
    }
    let s = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * s)
}

/// Projection of a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralProjection {
    /// Signed perpendicular offset, positive to the left of travel.
    pub lateral: f64,
    /// Arclength of the foot point from the polyline start.
    pub arclength: f64,
    /// Heading of the nearest segment.
    pub heading: f64,
    /// Unsigned distance to the foot point.
    pub distance: f64,
}

/// Projects `p` onto the nearest segment of `line` (first one on ties).
///
/// The sign of `lateral` comes from the side of the nearest segment's
/// direction; its magnitude is the true distance to the polyline.
pub fn polyline_lateral(p: Vec2, line: &[Vec2]) -> LateralProjection {
    assert!(line.len() >= 2, "polyline needs at least two points");
    let mut best: Option<LateralProjection> = None;
    let mut acc = 0.0;
    for w in line.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ab = b - a;
        let len = ab.norm();
        if len <= EPS {
            continue;
        }
        let dir = ab * (1.0 / len);
        let s = (p - a).dot(dir).clamp(0.0, len);
        let foot = a + dir * s;
        let distance = p.dist(foot);
        let side = dir.cross(p - a);
        let lateral = if side < 0.0 { -distance } else { distance };
        if best.map_or(true, |b| distance < b.distance) {
            best = Some(LateralProjection {
                lateral,
                arclength: acc + s,
                heading: dir.angle(),
                distance,
            });
        }
        acc += len;
    }
    best.unwrap_or(LateralProjection {
        lateral: 0.0,
        arclength: 0.0,
        heading: 0.0,
        distance: p.dist(line[0]),
    })
}

pub fn polyline_length(line: &[Vec2]) -> f64 {
    line.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Point at arclength `s` along the polyline, clamped to its ends.
pub fn polyline_point_at(line: &[Vec2], s: f64) -> Vec2 {
    let mut rem = s.max(0.0);
    for w in line.windows(2) {
        let len = w[0].dist(w[1]);
        if rem <= len && len > 0.0 {
            return w[0].lerp(w[1], rem / len);
        }
        rem -= len;
    }
    *line.last().expect("non-empty polyline")
}

/// `n` points at equal arclength spacing, endpoints included.
pub fn resample_polyline(line: &[Vec2], n: usize) -> Vec<Vec2> {
    let total = polyline_length(line);
    match n {
        0 => Vec::new(),
        1 => vec![line[0]],
        _ => (0..n)
            .map(|i| polyline_point_at(line, total * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

/// Intersection of two closed segments. Collinear overlaps report the first
/// shared point in the direction of `s1`.
pub fn segments_intersect(s1: (Vec2, Vec2), s2: (Vec2, Vec2)) -> Option<Vec2> {
    let (p, p2) = s1;
    let (q, q2) = s2;
    let r = p2 - p;
    let s = q2 - q;
    let denom = r.cross(s);
    let scale = (r.norm() * s.norm()).max(1.0);
    if denom.abs() > EPS * scale {
        let t = (q - p).cross(s) / denom;
        let u = (q - p).cross(r) / denom;
        let tol_t = EPS / r.norm().max(EPS);
        let tol_u = EPS / s.norm().max(EPS);
        if t >= -tol_t && t <= 1.0 + tol_t && u >= -tol_u && u <= 1.0 + tol_u {
            return Some(p + r * t.clamp(0.0, 1.0));
        }
        return None;
    }
    // parallel: only collinear segments can meet
    if orient(p, p2, q).abs() > EPS * r.norm().max(s.norm()).max(1.0) {
        return None;
    }
    let rr = r.norm_sq();
    if rr <= EPS * EPS {
        // s1 is a point
        return (point_segment_distance(p, q, q2) <= EPS).then_some(p);
    }
    let t0 = (q - p).dot(r) / rr;
    let t1 = (q2 - p).dot(r) / rr;
    let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
    let start = lo.max(0.0);
    let end = hi.min(1.0);
    let tol = EPS / rr.sqrt();
    (start <= end + tol).then(|| p + r * start.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(x: f64, y: f64) -> OrientedBox {
        OrientedBox::new(Vec2::new(x, y), 0.0, 1.0, 1.0)
    }

    fn square(lo: f64, hi: f64) -> Ring {
        Ring::new(vec![
            Vec2::new(lo, lo),
            Vec2::new(hi, lo),
            Vec2::new(hi, hi),
            Vec2::new(lo, hi),
        ])
    }

    #[test]
    fn identical_boxes_overlap() {
        assert!(boxes_overlap(&unit(0.0, 0.0), &unit(0.0, 0.0)));
    }

    #[test]
    fn separated_unit_boxes() {
        assert!(!boxes_overlap(&unit(0.0, 0.0), &unit(3.0, 0.0)));
    }

    #[test]
    fn touching_boxes_overlap() {
        assert!(boxes_overlap(&unit(0.0, 0.0), &unit(1.0, 0.0)));
        assert!(!boxes_overlap(&unit(0.0, 0.0), &unit(1.0 + 1e-6, 0.0)));
    }

    #[test]
    fn rotated_box_corner_gap() {
        // diamond reaching x = 1.5 + sqrt(0.5)
        let a = unit(0.0, 0.0);
        let b = OrientedBox::new(Vec2::new(0.5 + 0.5_f64.sqrt() + 0.01, 0.0), PI / 4.0, 1.0, 1.0);
        assert!(!boxes_overlap(&a, &b));
        let c = OrientedBox::new(Vec2::new(0.5 + 0.5_f64.sqrt() - 0.01, 0.0), PI / 4.0, 1.0, 1.0);
        assert!(boxes_overlap(&a, &c));
    }

    #[test]
    fn swept_detects_tunnelling() {
        let a0 = unit(-5.0, 0.0);
        let a1 = unit(5.0, 0.0);
        let b = unit(0.0, 0.0);
        let s = swept_overlap(&a0, &a1, &b, &b).unwrap();
        assert!((s - 0.4).abs() < 1e-9);
        assert!(swept_overlap(&a0, &a1, &unit(0.0, 2.0), &unit(0.0, 2.0)).is_none());
    }

    #[test]
    fn centroid_inside_and_hole() {
        let poly = Polygon::new(square(0.0, 10.0), vec![square(4.0, 6.0)]);
        assert!(point_in_polygon(Vec2::new(2.0, 2.0), &poly));
        assert!(!point_in_polygon(Vec2::new(5.0, 5.0), &poly));
        // hole boundary is still drivable surface
        assert!(point_in_polygon(Vec2::new(4.0, 5.0), &poly));
        assert!(point_in_polygon(Vec2::new(10.0, 3.0), &poly));
        assert!(!point_in_polygon(Vec2::new(11.0, 3.0), &poly));
    }

    #[test]
    fn closing_vertex_dropped() {
        let r = Ring::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(0.0, 0.0),
        ]);
        assert_eq!(r.vertices().len(), 3);
    }

    #[test]
    fn lateral_on_line_and_left() {
        let line = [Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)];
        let on = polyline_lateral(Vec2::new(3.0, 0.0), &line);
        assert_eq!(on.lateral, 0.0);
        let left = polyline_lateral(Vec2::new(4.0, 2.0), &line);
        assert_eq!((left.lateral, left.arclength, left.heading), (2.0, 4.0, 0.0));
        let rev = [line[1], line[0]];
        assert_eq!(polyline_lateral(Vec2::new(4.0, 2.0), &rev).lateral, -2.0);
    }

    #[test]
    fn diagonals_cross_at_center() {
        let p = segments_intersect(
            (Vec2::new(0.0, 0.0), Vec2::new(2.0, 2.0)),
            (Vec2::new(0.0, 2.0), Vec2::new(2.0, 0.0)),
        )
        .unwrap();
        assert!(p.dist(Vec2::new(1.0, 1.0)) < 1e-12);
    }

    #[test]
    fn parallel_disjoint_and_collinear() {
        let a = (Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0));
        assert!(segments_intersect(a, (Vec2::new(0.0, 1.0), Vec2::new(2.0, 1.0))).is_none());
        assert!(segments_intersect(a, (Vec2::new(3.0, 0.0), Vec2::new(5.0, 0.0))).is_none());
        let hit = segments_intersect(a, (Vec2::new(3.0, 0.0), Vec2::new(1.0, 0.0))).unwrap();
        assert_eq!(hit, Vec2::new(1.0, 0.0));
        // touching at an endpoint
        let t = segments_intersect(a, (Vec2::new(2.0, 0.0), Vec2::new(2.0, 5.0))).unwrap();
        assert!(t.dist(Vec2::new(2.0, 0.0)) < 1e-12);
    }

    #[test]
    fn angle_wrap() {
        assert!((normalize_angle(PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((angle_diff(-3.0, 3.0) - (2.0 * PI - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn resample_endpoints() {
        let line = [Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(3.0, 3.0)];
        let pts = resample_polyline(&line, 4);
        assert_eq!(pts[0], Vec2::new(0.0, 0.0));
        assert!(pts[1].dist(Vec2::new(2.0, 0.0)) < 1e-12);
        assert!(pts[2].dist(Vec2::new(3.0, 1.0)) < 1e-12);
        assert_eq!(pts[3], Vec2::new(3.0, 3.0));
    }
}
