//! Scene model: validated world snapshot around a key timestamp, plus the
//! rigid transforms into the ego frame (x forward, y leftward).

mod schema;

pub use schema::{load_scene, parse_scene, LoadOptions, SceneDocument, SCHEMA_VERSION};

use crate::geometry::{angle_diff, normalize_angle, OrientedBox, Polygon, Ring, Vec2};
use crate::trajectory::{Trajectory, Waypoint};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const DEFAULT_EGO_LENGTH: f64 = 4.08;
pub const DEFAULT_EGO_WIDTH: f64 = 1.85;
pub const DEFAULT_LANE_WIDTH: f64 = 3.5;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column} ({field}): {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("unknown field `{0}` (strict mode)")]
    UnknownField(String),
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error("ego poses cover up to t = {last_covered}, need {needed}")]
    Coverage { last_covered: f64, needed: f64 },
}

impl SceneError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        SceneError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Field path for validation errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            SceneError::Validation { field, .. } | SceneError::Parse { field, .. } => Some(field),
            SceneError::UnknownField(f) => Some(f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    /// Counter-clockwise from +x, normalised to (-pi, pi].
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// `self ∘ other`: express `other` (given in this pose's frame) in the
    /// parent frame.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let p = self.pos() + other.pos().rotate(self.yaw);
        Pose2::new(p.x, p.y, self.yaw + other.yaw)
    }

    pub fn inverse(&self) -> Pose2 {
        let p = (-self.pos()).rotate(-self.yaw);
        Pose2::new(p.x, p.y, -self.yaw)
    }

    /// Position and yaw interpolation: linear in position, shortest arc in yaw.
    pub fn interpolate(&self, other: &Pose2, s: f64) -> Pose2 {
        let p = self.pos().lerp(other.pos(), s);
        Pose2::new(p.x, p.y, self.yaw + angle_diff(other.yaw, self.yaw) * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose2,
}

/// Pose lookup over an increasing timeline; `None` outside its span.
fn interpolate_timeline(poses: &[TimedPose], t: f64) -> Option<Pose2> {
    let first = poses.first()?;
    let last = poses.last()?;
    if t < first.t - 1e-9 || t > last.t + 1e-9 {
        return None;
    }
    let i = poses.partition_point(|p| p.t < t);
    if i == 0 {
        return Some(first.pose);
    }
    if i == poses.len() {
        return Some(last.pose);
    }
    let (a, b) = (&poses[i - 1], &poses[i]);
    let s = (t - a.t) / (b.t - a.t);
    Some(a.pose.interpolate(&b.pose, s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub id: String,
    pub category: String,
    pub length: f64,
    pub width: f64,
    pub poses: Vec<TimedPose>,
    pub velocity: Option<Vec2>,
}

impl AgentTrack {
    /// World pose at absolute time `t`: held before the first sample,
    /// interpolated inside the track, constant-velocity beyond its end.
    pub fn pose_at(&self, t: f64) -> Pose2 {
        let first = &self.poses[0];
        let last = &self.poses[self.poses.len() - 1];
        if t <= first.t {
            return first.pose;
        }
        if let Some(p) = interpolate_timeline(&self.poses, t) {
            if t <= last.t {
                return p;
            }
        }
        let v = self.end_velocity();
        let dt = t - last.t;
        Pose2::new(last.pose.x + v.x * dt, last.pose.y + v.y * dt, last.pose.yaw)
    }

    /// Velocity used for extrapolation: the logged one, else the last finite
    /// difference, else zero.
    pub fn end_velocity(&self) -> Vec2 {
        if let Some(v) = self.velocity {
            return v;
        }
        match self.poses.as_slice() {
            [.., a, b] if b.t > a.t => (b.pose.pos() - a.pose.pos()) * (1.0 / (b.t - a.t)),
            _ => Vec2::ZERO,
        }
    }

    /// True when the yaw never changes along the track (extrapolation keeps yaw).
    pub fn constant_yaw(&self) -> bool {
        self.poses
            .windows(2)
            .all(|w| angle_diff(w[1].pose.yaw, w[0].pose.yaw).abs() < 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneCenterline {
    pub id: String,
    pub polyline: Vec<Vec2>,
    pub successors: Vec<String>,
    pub left: Option<String>,
    pub right: Option<String>,
    pub signal_ids: Vec<String>,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DrivableArea {
    pub outer: Vec<Ring>,
    pub holes: Vec<Ring>,
}

impl DrivableArea {
    /// Inside (or on) some outer ring and not strictly inside any hole.
    pub fn contains(&self, p: Vec2) -> bool {
        self.outer.iter().any(|r| r.contains(p)) && !self.holes.iter().any(|h| h.contains_strict(p))
    }

    pub fn map(&self, f: impl Fn(Vec2) -> Vec2 + Copy) -> DrivableArea {
        DrivableArea {
            outer: self.outer.iter().map(|r| r.map(f)).collect(),
            holes: self.holes.iter().map(|r| r.map(f)).collect(),
        }
    }

    /// Per-outer-ring polygons sharing the global hole list.
    pub fn polygons(&self) -> Vec<Polygon> {
        self.outer
            .iter()
            .map(|o| Polygon::new(o.clone(), self.holes.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalState {
    Red,
    Yellow,
    Green,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalInterval {
    pub start: f64,
    pub end: f64,
    pub state: SignalState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSignal {
    pub id: String,
    pub stop_line: (Vec2, Vec2),
    pub lanes: Vec<String>,
    /// Sorted, non-overlapping.
    pub states: Vec<SignalInterval>,
}

impl TrafficSignal {
    /// State at absolute time `t`; intervals are closed at the start and
    /// open at the end. Uncovered times are `Unknown`.
    pub fn state_at(&self, t: f64) -> SignalState {
        self.states
            .iter()
            .find(|s| t >= s.start && t < s.end)
            .map_or(SignalState::Unknown, |s| s.state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub key_time: f64,
    pub ego_length: f64,
    pub ego_width: f64,
    pub ego_poses: Vec<TimedPose>,
    pub agents: Vec<AgentTrack>,
    pub lanes: Vec<LaneCenterline>,
    pub drivable: DrivableArea,
    pub signals: Vec<TrafficSignal>,
    pub caption: Option<String>,
}

impl Scene {
    /// Interpolated ego pose at absolute time `t`, if the log covers it.
    pub fn ego_pose_at(&self, t: f64) -> Option<Pose2> {
        interpolate_timeline(&self.ego_poses, t)
    }

    /// Ego pose at the key timestamp (validated to exist on load).
    pub fn key_pose(&self) -> Pose2 {
        self.ego_pose_at(self.key_time)
            .expect("validated scene covers key_time")
    }

    pub fn to_ego_frame(&self, p: &Pose2) -> Pose2 {
        self.key_pose().inverse().compose(p)
    }

    pub fn to_world(&self, p: &Pose2) -> Pose2 {
        self.key_pose().compose(p)
    }

    pub fn point_to_ego(&self, p: Vec2) -> Vec2 {
        self.to_ego_frame(&Pose2::new(p.x, p.y, 0.0)).pos()
    }

    pub fn lane(&self, id: &str) -> Option<&LaneCenterline> {
        self.lanes.iter().find(|l| l.id == id)
    }

    pub fn agent(&self, id: &str) -> Option<&AgentTrack> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn last_ego_time(&self) -> f64 {
        self.ego_poses.last().map_or(f64::NAN, |p| p.t)
    }

    /// The logged ego future resampled every `period` up to `horizon`,
    /// expressed in the ego frame at the key timestamp.
    pub fn expert_trajectory(&self, horizon: f64, period: f64) -> Result<Trajectory, SceneError> {
        let n = (horizon / period).round() as usize;
        let end = self.key_time + period * n as f64;
        let last = self.last_ego_time();
        if last + 1e-9 < end {
            return Err(SceneError::Coverage {
                last_covered: last - self.key_time,
                needed: horizon,
            });
        }
        let inv = self.key_pose().inverse();
        let waypoints = (1..=n)
            .map(|i| {
                let t = period * i as f64;
                let world = self.ego_pose_at(self.key_time + t).expect("coverage checked");
                let p = inv.compose(&world);
                Waypoint { t, x: p.x, y: p.y }
            })
            .collect();
        Trajectory::new(period, waypoints).map_err(|e| SceneError::invalid("ego_poses", e.to_string()))
    }

    /// Copy of the scene with every world-frame coordinate mapped through
    /// the rigid transform `offset ∘ rotation(theta)`. Ego-frame quantities
    /// are unchanged by construction.
    pub fn rigidly_transformed(&self, dx: f64, dy: f64, theta: f64) -> Scene {
        let tf = Pose2::new(dx, dy, theta);
        let pose = |p: &Pose2| tf.compose(p);
        let pt = |p: Vec2| tf.compose(&Pose2::new(p.x, p.y, 0.0)).pos();
        let tp = |ps: &[TimedPose]| {
            ps.iter()
                .map(|p| TimedPose {
                    t: p.t,
                    pose: pose(&p.pose),
                })
                .collect::<Vec<_>>()
        };
        Scene {
            ego_poses: tp(&self.ego_poses),
            agents: self
                .agents
                .iter()
                .map(|a| AgentTrack {
                    poses: tp(&a.poses),
                    velocity: a.velocity.map(|v| v.rotate(theta)),
                    ..a.clone()
                })
                .collect(),
            lanes: self
                .lanes
                .iter()
                .map(|l| LaneCenterline {
                    polyline: l.polyline.iter().map(|&p| pt(p)).collect(),
                    ..l.clone()
                })
                .collect(),
            drivable: self.drivable.map(pt),
            signals: self
                .signals
                .iter()
                .map(|s| TrafficSignal {
                    stop_line: (pt(s.stop_line.0), pt(s.stop_line.1)),
                    ..s.clone()
                })
                .collect(),
            ..self.clone()
        }
    }

    /// Precomputed ego-frame geometry for rule checks.
    pub fn ego_view(&self) -> EgoView<'_> {
        EgoView::new(self)
    }
}

/// Ego-frame copy of the static scene geometry plus agent placement at
/// times relative to the key timestamp.
#[derive(Debug, Clone)]
pub struct EgoView<'a> {
    pub scene: &'a Scene,
    world_to_ego: Pose2,
    pub lanes: BTreeMap<String, Vec<Vec2>>,
    pub drivable: DrivableArea,
    pub stop_lines: Vec<(Vec2, Vec2)>,
}

impl<'a> EgoView<'a> {
    fn new(scene: &'a Scene) -> Self {
        let inv = scene.key_pose().inverse();
        let pt = |p: Vec2| inv.compose(&Pose2::new(p.x, p.y, 0.0)).pos();
        Self {
            scene,
            world_to_ego: inv,
            lanes: scene
                .lanes
                .iter()
                .map(|l| (l.id.clone(), l.polyline.iter().map(|&p| pt(p)).collect()))
                .collect(),
            drivable: scene.drivable.map(pt),
            stop_lines: scene.signals.iter().map(|s| (pt(s.stop_line.0), pt(s.stop_line.1))).collect(),
        }
    }

    pub fn pose_to_ego(&self, p: &Pose2) -> Pose2 {
        self.world_to_ego.compose(p)
    }

    /// Agent pose in the ego frame at `t` seconds after the key timestamp.
    pub fn agent_pose(&self, agent: &AgentTrack, t: f64) -> Pose2 {
        self.pose_to_ego(&agent.pose_at(self.scene.key_time + t))
    }

    pub fn agent_box(&self, agent: &AgentTrack, t: f64) -> OrientedBox {
        let p = self.agent_pose(agent, t);
        OrientedBox::new(p.pos(), p.yaw, agent.length, agent.width)
    }

    pub fn ego_box(&self, center: Vec2, yaw: f64) -> OrientedBox {
        OrientedBox::new(center, yaw, self.scene.ego_length, self.scene.ego_width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn straight_scene(speed: f64) -> Scene {
        let ego_poses = (0..=8)
            .map(|i| {
                let t = i as f64 * 0.5;
                TimedPose {
                    t,
                    pose: Pose2::new(10.0 + speed * t, -3.0, 0.0),
                }
            })
            .collect();
        Scene {
            scene_id: "s".into(),
            key_time: 0.0,
            ego_length: DEFAULT_EGO_LENGTH,
            ego_width: DEFAULT_EGO_WIDTH,
            ego_poses,
            agents: vec![],
            lanes: vec![],
            drivable: DrivableArea::default(),
            signals: vec![],
            caption: None,
        }
    }

    #[test]
    fn ego_pose_maps_to_origin() {
        let mut s = straight_scene(2.0);
        for p in &mut s.ego_poses {
            p.pose.yaw = 0.7;
        }
        let e = s.to_ego_frame(&s.key_pose());
        assert!(e.x.abs() < 1e-12 && e.y.abs() < 1e-12 && e.yaw.abs() < 1e-12);
    }

    #[test]
    fn point_ahead_along_heading() {
        let mut s = straight_scene(0.0);
        for p in &mut s.ego_poses {
            p.pose.yaw = 1.0;
        }
        let k = s.key_pose();
        let ahead = Pose2::new(k.x + 5.0 * 1.0f64.cos(), k.y + 5.0 * 1.0f64.sin(), 1.0);
        let e = s.to_ego_frame(&ahead);
        assert!((e.x - 5.0).abs() < 1e-12 && e.y.abs() < 1e-12);
    }

    #[test]
    fn stationary_and_constant_speed_expert() {
        let t = straight_scene(0.0).expert_trajectory(3.0, 0.5).unwrap();
        assert_eq!(t.len(), 6);
        assert!(t.waypoints.iter().all(|w| w.x.abs() < 1e-12 && w.y.abs() < 1e-12));
        let t = straight_scene(2.0).expert_trajectory(3.0, 0.5).unwrap();
        for (i, w) in t.waypoints.iter().enumerate() {
            assert!((w.x - (i + 1) as f64).abs() < 1e-12 && w.y.abs() < 1e-12);
        }
    }

    #[test]
    fn coverage_error_names_last_time() {
        let mut s = straight_scene(1.0);
        s.ego_poses.truncate(5);
        match s.expert_trajectory(3.0, 0.5) {
            Err(SceneError::Coverage { last_covered, .. }) => assert_eq!(last_covered, 2.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn agent_extrapolates_at_constant_velocity() {
        let a = AgentTrack {
            id: "a".into(),
            category: "vehicle.car".into(),
            length: 4.0,
            width: 2.0,
            poses: vec![
                TimedPose { t: 0.0, pose: Pose2::new(0.0, 0.0, 0.0) },
                TimedPose { t: 1.0, pose: Pose2::new(2.0, 0.0, 0.0) },
            ],
            velocity: None,
        };
        assert_eq!(a.pose_at(0.5).x, 1.0);
        assert_eq!(a.pose_at(3.0).x, 6.0);
        assert_eq!(a.pose_at(-1.0).x, 0.0);
    }

    #[test]
    fn signal_state_defaults_unknown() {
        let s = TrafficSignal {
            id: "s".into(),
            stop_line: (Vec2::ZERO, Vec2::new(0.0, 1.0)),
            lanes: vec![],
            states: vec![SignalInterval { start: 0.0, end: 2.0, state: SignalState::Red }],
        };
        assert_eq!(s.state_at(1.0), SignalState::Red);
        assert_eq!(s.state_at(2.0), SignalState::Unknown);
    }
}
