//! Oracles and random scenario generators shared by the test suites.
//!
//! Everything here is deliberately written without the engine's geometry
//! kernel: points-in-polygons use winding numbers, box overlap uses
//! rasterisation or polygon distance, and ego motion is re-derived from the
//! raw waypoints. The engine types are used only as data containers.

use cfdrive_core::geometry::{Ring, Vec2};
use cfdrive_core::scene::{AgentTrack, DrivableArea, Pose2, TimedPose};
use cfdrive_core::{Scene, Trajectory};
use rand::Rng;
use std::f64::consts::PI;

pub use rand_chacha::ChaCha8Rng;
pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    Vec2::new(a.x - b.x, a.y - b.y)
}

fn len(a: Vec2) -> f64 {
    (a.x * a.x + a.y * a.y).sqrt()
}

// ---------------------------------------------------------------- polygons

/// Winding number of `ring` around `p` (signed upward/downward edge
/// crossings to the right of `p`).
pub fn winding_number(p: Vec2, ring: &[Vec2]) -> i32 {
    let n = ring.len();
    let mut wn = 0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        let side = cross(sub(b, a), sub(p, a));
        if a.y <= p.y {
            if b.y > p.y && side > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && side < 0.0 {
            wn -= 1;
        }
    }
    wn
}

pub fn winding_inside(p: Vec2, outer: &[Vec2], holes: &[Vec<Vec2>]) -> bool {
    winding_number(p, outer) != 0 && holes.iter().all(|h| winding_number(p, h) == 0)
}

pub fn seg_dist(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = sub(b, a);
    let l2 = ab.x * ab.x + ab.y * ab.y;
    let s = if l2 == 0.0 {
        0.0
    } else {
        ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / l2
    };
    let s = s.clamp(0.0, 1.0);
    len(sub(p, Vec2::new(a.x + s * ab.x, a.y + s * ab.y)))
}

/// Distance from `p` to the nearest edge of any ring.
pub fn boundary_distance(p: Vec2, rings: &[&[Vec2]]) -> f64 {
    rings
        .iter()
        .flat_map(|r| (0..r.len()).map(move |i| seg_dist(p, r[i], r[(i + 1) % r.len()])))
        .fold(f64::INFINITY, f64::min)
}

/// Random simple polygon: a star-shaped ring around `c` with sorted angles.
pub fn random_star(rng: &mut ChaCha8Rng, c: Vec2, r_min: f64, r_max: f64, n: usize) -> Vec<Vec2> {
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let ring: Vec<Vec2> = angles
        .iter()
        .map(|&a| {
            let r = rng.random_range(r_min..r_max);
            Vec2::new(c.x + r * a.cos(), c.y + r * a.sin())
        })
        .collect();
    if rng.random_bool(0.5) {
        ring.into_iter().rev().collect()
    } else {
        ring
    }
}

// ------------------------------------------------------------------- boxes

/// Corners of a `length` x `width` rectangle centred at `c` with heading
/// `yaw`, counter-clockwise.
pub fn box_corners(c: Vec2, yaw: f64, length: f64, width: f64) -> [Vec2; 4] {
    let (s, co) = yaw.sin_cos();
    let hl = length / 2.0;
    let hw = width / 2.0;
    let at = |u: f64, v: f64| Vec2::new(c.x + co * u - s * v, c.y + s * u + co * v);
    [at(hl, hw), at(-hl, hw), at(-hl, -hw), at(hl, -hw)]
}

/// Whether `p` lies in the box, via its local coordinates.
pub fn box_contains(c: Vec2, yaw: f64, length: f64, width: f64, p: Vec2) -> bool {
    let d = sub(p, c);
    let (s, co) = yaw.sin_cos();
    let u = co * d.x + s * d.y;
    let v = -s * d.x + co * d.y;
    u.abs() <= length / 2.0 && v.abs() <= width / 2.0
}

#[derive(Debug, Clone, Copy)]
pub struct BoxSpec {
    pub c: Vec2,
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
}

/// Rasterisation: any grid point of spacing `h` over box `a` that falls in `b`.
pub fn raster_overlap(a: &BoxSpec, b: &BoxSpec, h: f64) -> bool {
    let nu = (a.length / h).ceil() as i64;
    let nv = (a.width / h).ceil() as i64;
    let (s, co) = a.yaw.sin_cos();
    for i in 0..=nu {
        let u = -a.length / 2.0 + a.length * i as f64 / nu as f64;
        for j in 0..=nv {
            let v = -a.width / 2.0 + a.width * j as f64 / nv as f64;
            let p = Vec2::new(a.c.x + co * u - s * v, a.c.y + s * u + co * v);
            if box_contains(b.c, b.yaw, b.length, b.width, p) {
                return true;
            }
        }
    }
    false
}

fn segments_cross(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = cross(sub(q2, q1), sub(p1, q1));
    let d2 = cross(sub(q2, q1), sub(p2, q1));
    let d3 = cross(sub(p2, p1), sub(q1, p1));
    let d4 = cross(sub(p2, p1), sub(q2, p1));
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn convex_contains(poly: &[Vec2; 4], p: Vec2) -> bool {
    (0..4).all(|i| cross(sub(poly[(i + 1) % 4], poly[i]), sub(p, poly[i])) >= 0.0)
}

/// Euclidean distance between two convex quads (counter-clockwise); zero
/// when they intersect or touch.
pub fn quad_distance(a: &[Vec2; 4], b: &[Vec2; 4]) -> f64 {
    for i in 0..4 {
        for j in 0..4 {
            if segments_cross(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4]) {
                return 0.0;
            }
        }
    }
    if a.iter().any(|&p| convex_contains(b, p)) || b.iter().any(|&p| convex_contains(a, p)) {
        return 0.0;
    }
    let mut d = f64::INFINITY;
    for i in 0..4 {
        for j in 0..4 {
            d = d.min(seg_dist(a[i], b[j], b[(j + 1) % 4]));
            d = d.min(seg_dist(b[j], a[i], a[(i + 1) % 4]));
        }
    }
    d
}

// -------------------------------------------------------------- ego motion

/// Ego motion re-derived from raw waypoints: origin knot prepended, linear
/// position, heading of the segment `(t_{k-1}, t_k]`, carried over
/// zero-length segments (zero at the start).
#[derive(Debug, Clone)]
pub struct OracleEgo {
    pub t: Vec<f64>,
    pub p: Vec<Vec2>,
    pub heading: Vec<f64>,
}

impl OracleEgo {
    pub fn new(traj: &Trajectory) -> Self {
        let mut t = vec![0.0];
        let mut p = vec![Vec2::new(0.0, 0.0)];
        for w in &traj.waypoints {
            t.push(w.t);
            p.push(Vec2::new(w.x, w.y));
        }
        let mut heading = Vec::new();
        let mut last = 0.0;
        for k in 1..p.len() {
            let d = sub(p[k], p[k - 1]);
            if len(d) > 1e-6 {
                last = d.y.atan2(d.x);
            }
            heading.push(last);
        }
        Self { t, p, heading }
    }

    pub fn horizon(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn at(&self, t: f64) -> (Vec2, f64) {
        let mut k = 1;
        while k + 1 < self.t.len() && t > self.t[k] {
            k += 1;
        }
        let s = ((t - self.t[k - 1]) / (self.t[k] - self.t[k - 1])).clamp(0.0, 1.0);
        let (a, b) = (self.p[k - 1], self.p[k]);
        (Vec2::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y)), self.heading[k - 1])
    }
}

// ----------------------------------------------------------------- agents

/// Ego-frame constant-velocity rigid agent.
#[derive(Debug, Clone)]
pub struct Motion {
    pub id: String,
    pub p0: Vec2,
    pub v: Vec2,
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
}

impl Motion {
    pub fn at(&self, t: f64) -> Vec2 {
        Vec2::new(self.p0.x + self.v.x * t, self.p0.y + self.v.y * t)
    }
}

#[derive(Debug, Clone)]
pub struct CollisionCase {
    pub scene: Scene,
    pub traj: Trajectory,
    pub agents: Vec<Motion>,
}

pub fn random_trajectory(rng: &mut ChaCha8Rng) -> Trajectory {
    let mut speed: f64 = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.5..15.0) };
    let accel: f64 = rng.random_range(-2.0..2.0);
    let yaw_rate: f64 = rng.random_range(-0.4..0.4);
    let mut pos = (0.0f64, 0.0f64);
    let mut yaw = 0.0f64;
    let mut pts = Vec::new();
    let h: f64 = 0.05;
    for step in 1..=60 {
        if speed > 0.0 {
            speed = (speed + accel * h).max(0.5);
        }
        yaw += yaw_rate * h;
        pos.0 += speed * yaw.cos() * h;
        pos.1 += speed * yaw.sin() * h;
        if step % 10 == 0 {
            pts.push(pos);
        }
    }
    Trajectory::from_positions(0.5, &pts).unwrap()
}

fn world(key: &Pose2, p: Vec2, yaw: f64) -> Pose2 {
    key.compose(&Pose2::new(p.x, p.y, yaw))
}

/// An ego trajectory with 1 to 4 boxes placed near its path, some static
/// and some moving at constant velocity, stored under a random world pose.
pub fn random_collision_case(rng: &mut ChaCha8Rng, index: usize) -> CollisionCase {
    let traj = random_trajectory(rng);
    let ego = OracleEgo::new(&traj);
    let n = rng.random_range(1..=4);
    let agents: Vec<Motion> = (0..n)
        .map(|i| {
            let v = if rng.random_bool(0.3) {
                Vec2::new(0.0, 0.0)
            } else {
                let sp = rng.random_range(0.0..12.0);
                let dir = rng.random_range(-PI..PI);
                Vec2::new(sp * dir.cos(), sp * dir.sin())
            };
            let tau = rng.random_range(0.0..3.0);
            let r = rng.random_range(0.0..7.0);
            let a = rng.random_range(-PI..PI);
            let (e, _) = ego.at(tau);
            let at_tau = Vec2::new(e.x + r * a.cos(), e.y + r * a.sin());
            Motion {
                id: format!("a{i}"),
                p0: Vec2::new(at_tau.x - v.x * tau, at_tau.y - v.y * tau),
                v,
                yaw: rng.random_range(-PI..PI),
                length: rng.random_range(0.5..5.0),
                width: rng.random_range(0.5..2.5),
            }
        })
        .collect();
    let key = Pose2::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(-PI..PI));
    let key_time = rng.random_range(0.0..100.0);
    let scene = scene_from_parts(&format!("rand-{index:04}"), key, key_time, &agents, None);
    CollisionCase { scene, traj, agents }
}

/// Builds a world-frame scene from ego-frame parts. `drivable` defaults to
/// a large square.
pub fn scene_from_parts(id: &str, key: Pose2, key_time: f64, agents: &[Motion], drivable: Option<Vec<Vec2>>) -> Scene {
    let area = drivable.unwrap_or_else(|| {
        vec![
            Vec2::new(-1000.0, -1000.0),
            Vec2::new(1000.0, -1000.0),
            Vec2::new(1000.0, 1000.0),
            Vec2::new(-1000.0, 1000.0),
        ]
    });
    let to_world = |p: Vec2| world(&key, p, 0.0).pos();
    let (s, c) = key.yaw.sin_cos();
    Scene {
        scene_id: id.into(),
        key_time,
        ego_length: 4.08,
        ego_width: 1.85,
        ego_poses: vec![TimedPose { t: key_time, pose: key }],
        agents: agents
            .iter()
            .map(|m| AgentTrack {
                id: m.id.clone(),
                category: "vehicle.car".into(),
                length: m.length,
                width: m.width,
                poses: vec![TimedPose {
                    t: key_time,
                    pose: world(&key, m.p0, m.yaw),
                }],
                velocity: Some(Vec2::new(c * m.v.x - s * m.v.y, s * m.v.x + c * m.v.y)),
            })
            .collect(),
        lanes: vec![],
        drivable: DrivableArea {
            outer: vec![Ring::new(area.into_iter().map(to_world).collect())],
            holes: vec![],
        },
        signals: vec![],
        caption: None,
    }
}

// --------------------------------------------------------- dense collision

#[derive(Debug, Clone, Copy)]
pub struct DenseContact {
    /// Earliest contact time found (sample or refined minimum).
    pub onset: Option<f64>,
    /// Smallest box distance observed over the horizon.
    pub min_gap: f64,
}

fn ternary_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let t = 0.5 * (lo + hi);
    (t, f(t))
}

/// Dense sampling of ego-vs-agent box distance over `(0, horizon]` at step
/// `dt`, plus samples just after every waypoint (where the ego heading
/// switches) and ternary refinement around near-contact local minima.
/// `shrink` is subtracted from every box dimension.
pub fn dense_contact(ego: &OracleEgo, ego_len: f64, ego_wid: f64, m: &Motion, dt: f64, shrink: f64) -> DenseContact {
    let gap = |t: f64, after_knot: bool| {
        let (p, mut h) = ego.at(t);
        if after_knot {
            let k = ego.t.iter().position(|&kt| (kt - t).abs() < 1e-12).unwrap();
            if k < ego.heading.len() {
                h = ego.heading[k];
            }
        }
        let e = box_corners(p, h, ego_len - shrink, ego_wid - shrink);
        let a = box_corners(m.at(t), m.yaw, m.length - shrink, m.width - shrink);
        quad_distance(&e, &a)
    };
    let horizon = ego.horizon();
    let mut samples: Vec<(f64, bool)> = Vec::new();
    let n = (horizon / dt).round() as usize;
    for k in 1..=n {
        samples.push((k as f64 * dt, false));
    }
    for &kt in &ego.t[..ego.t.len() - 1] {
        samples.push((kt, true));
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let d: Vec<f64> = samples.iter().map(|&(t, k)| gap(t, k)).collect();

    let mut onset: Option<f64> = None;
    let mut min_gap = f64::INFINITY;
    for i in 0..samples.len() {
        min_gap = min_gap.min(d[i]);
        if onset.is_none() && d[i] == 0.0 {
            onset = Some(samples[i].0);
        }
        let left = if i > 0 { d[i - 1] } else { f64::INFINITY };
        let right = d.get(i + 1).copied().unwrap_or(f64::INFINITY);
        if d[i] > 0.0 && d[i] < 0.05 && d[i] <= left && d[i] <= right {
            let lo = if i > 0 { samples[i - 1].0 } else { 0.0 };
            let hi = samples.get(i + 1).map_or(horizon, |s| s.0);
            // stay on one heading: refine only inside a single segment
            let seg_lo = ego.t.iter().copied().filter(|&kt| kt <= samples[i].0).fold(0.0, f64::max);
            let seg_hi = ego.t.iter().copied().filter(|&kt| kt >= samples[i].0).fold(horizon, f64::min);
            let (lo, hi) = (lo.max(seg_lo + 1e-12), hi.min(seg_hi));
            if hi > lo {
                let (t, g) = ternary_min(|t| gap(t, false), lo, hi);
                min_gap = min_gap.min(g);
                if g == 0.0 && onset.is_none_or(|o| t < o) {
                    onset = Some(t);
                }
            }
        }
    }
    DenseContact { onset, min_gap }
}

/// Oracle verdict for one agent: `Some(onset)` / `None`, or `Err(())` when
/// the case sits in the boundary band (closest approach within `band` of
/// touching, either way).
pub fn collision_oracle(case: &CollisionCase, m: &Motion, dt: f64, band: f64) -> Result<Option<f64>, ()> {
    let ego = OracleEgo::new(&case.traj);
    let (l, w) = (case.scene.ego_length, case.scene.ego_width);
    let base = dense_contact(&ego, l, w, m, dt, 0.0);
    match base.onset {
        None if base.min_gap <= band => Err(()),
        None => Ok(None),
        Some(t) => {
            let shrunk = dense_contact(&ego, l, w, m, dt, 2.0 * band);
            if shrunk.onset.is_none() {
                Err(())
            } else {
                Ok(Some(t))
            }
        }
    }
}

// ---------------------------------------------------------- dense drivable

/// First dense sample time at which a corner of the ego box lies outside the
/// convex region `area` (winding test). `Err(())` when the case grazes the
/// boundary: the deepest corner excursion over the horizon, signed positive
/// outside, lies within `band` of zero.
pub fn drivable_oracle(traj: &Trajectory, ego_len: f64, ego_wid: f64, area: &[Vec2], dt: f64, band: f64) -> Result<Option<f64>, ()> {
    let ego = OracleEgo::new(traj);
    let n = (ego.horizon() / dt).round() as usize;
    let mut times: Vec<(f64, Option<f64>)> = (0..=n).map(|k| (k as f64 * dt, None)).collect();
    for (k, &kt) in ego.t.iter().enumerate().take(ego.t.len() - 1) {
        times.push((kt, Some(ego.heading[k])));
    }
    times.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut first_exit = None;
    let mut deepest = f64::NEG_INFINITY;
    for (t, heading_override) in times {
        let (p, mut h) = ego.at(t);
        if t == 0.0 {
            h = ego.heading[0];
        }
        if let Some(o) = heading_override {
            h = o;
        }
        for c in box_corners(p, h, ego_len, ego_wid) {
            let bd = boundary_distance(c, &[area]);
            let outside = winding_number(c, area) == 0;
            deepest = deepest.max(if outside { bd } else { -bd });
            if outside && first_exit.is_none() {
                first_exit = Some(t.max(dt));
            }
        }
    }
    if deepest.abs() <= band {
        Err(())
    } else {
        Ok(first_exit)
    }
}

/// Random convex polygon (counter-clockwise) containing the origin region
/// the ego starts in: a rotated, stretched octagon-ish hull.
pub fn random_convex_corridor(rng: &mut ChaCha8Rng) -> Vec<Vec2> {
    let n = rng.random_range(4..10);
    let mut angles: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64 + rng.random_range(-0.2..0.2)).collect();
    angles.sort_by(f64::total_cmp);
    let sx = rng.random_range(5.0..40.0);
    let sy = rng.random_range(3.0..20.0);
    let rot = rng.random_range(-0.6..0.6);
    let cx = rng.random_range(0.0..15.0);
    angles
        .iter()
        .map(|&a| {
            let (x, y) = (sx * a.cos(), sy * a.sin());
            let (s, c) = f64::sin_cos(rot);
            Vec2::new(cx + c * x - s * y, c * y + s * x)
        })
        .collect()
}

/// Three well-separated 3-d blobs, `per` points each, with labels.
pub fn three_blobs(seed: u64, per: usize, spread: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let centres = [[0.0, 0.0, 0.0], [10.0, 0.0, 5.0], [0.0, 12.0, -4.0]];
    let mut r = rng(seed);
    let mut data = Vec::new();
    let mut truth = Vec::new();
    for (label, c) in centres.iter().enumerate() {
        for _ in 0..per {
            // sum of uniforms, roughly gaussian
            let mut p = Vec::new();
            for &x in c {
                let g: f64 = (0..6).map(|_| r.random_range(-1.0..1.0)).sum::<f64>() / 6f64.sqrt();
                p.push(x + spread * g);
            }
            data.push(p);
            truth.push(label);
        }
    }
    (data, truth)
}

fn choose2(n: usize) -> f64 {
    n as f64 * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index from the contingency table.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let mut table: std::collections::HashMap<(usize, usize), usize> = Default::default();
    let mut ra: std::collections::HashMap<usize, usize> = Default::default();
    let mut rb: std::collections::HashMap<usize, usize> = Default::default();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| choose2(n)).sum();
    let sa: f64 = ra.values().map(|&n| choose2(n)).sum();
    let sb: f64 = rb.values().map(|&n| choose2(n)).sum();
    let expected = sa * sb / choose2(a.len());
    let max = 0.5 * (sa + sb);
    (index - expected) / (max - expected)
}
