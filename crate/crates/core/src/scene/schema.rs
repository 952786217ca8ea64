//! On-disk scene document (`omnidrive_scene_v1`) and its validation.
//!
//! One JSON document per scene. Units are metres, seconds and radians; the
//! world frame is any fixed planar frame. Points are `[x, y]` arrays.
//!
//! Converter contract for nuScenes / OpenLane-v2 style annotations:
//!
//! | document field        | source                                              |
//! |-----------------------|-----------------------------------------------------|
//! | `scene_id`            | sample token                                        |
//! | `key_time`            | sample timestamp, seconds                           |
//! | `ego_poses[]`         | ego_pose translation x/y + yaw of the rotation      |
//! | `agents[].category`   | annotation category name, verbatim                  |
//! | `agents[].length/width` | box size (l, w); height dropped                   |
//! | `agents[].poses[]`    | box centre x/y + yaw per annotated timestamp        |
//! | `agents[].velocity`   | box velocity x/y at the key sample                  |
//! | `lanes[]`             | lane centerline points, successor / neighbour links |
//! | `drivable`            | drivable_area polygons; holes for islands          |
//! | `signals[]`           | traffic element + stop line, lane relations, state  |
//!
//! z coordinates are dropped everywhere.

use super::{
    AgentTrack, DrivableArea, LaneCenterline, Pose2, Scene, SceneError, SignalInterval, SignalState,
    TimedPose, TrafficSignal, DEFAULT_EGO_LENGTH, DEFAULT_EGO_WIDTH, DEFAULT_LANE_WIDTH,
};
use crate::geometry::{Ring, Vec2, EPS};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

pub const SCHEMA_VERSION: &str = "omnidrive_scene_v1";

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Reject fields the schema does not know.
    pub strict: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { strict: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneDocument {
    pub schema_version: String,
    pub scene_id: String,
    pub key_time: f64,
    #[serde(default)]
    pub ego: Option<EgoDoc>,
    pub ego_poses: Vec<PoseDoc>,
    #[serde(default)]
    pub agents: Vec<AgentDoc>,
    #[serde(default)]
    pub lanes: Vec<LaneDoc>,
    #[serde(default)]
    pub drivable: DrivableDoc,
    #[serde(default)]
    pub signals: Vec<SignalDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EgoDoc {
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoseDoc {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentDoc {
    pub id: String,
    pub category: String,
    pub length: f64,
    pub width: f64,
    pub poses: Vec<PoseDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaneDoc {
    pub id: String,
    pub polyline: Vec<[f64; 2]>,
    #[serde(default)]
    pub successors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<String>,
    #[serde(default)]
    pub signal_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DrivableDoc {
    #[serde(default)]
    pub outer: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub holes: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalDoc {
    pub id: String,
    #[serde(default)]
    pub stop_line: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub lanes: Vec<String>,
    #[serde(default)]
    pub states: Vec<SignalInterval>,
}

pub fn load_scene(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scene(&text, opts)
}

pub fn parse_scene(text: &str, opts: LoadOptions) -> Result<Scene, SceneError> {
    let mut ignored = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let mut record = |p: serde_ignored::Path<'_>| ignored.push(p.to_string());
    let tracked = serde_ignored::Deserializer::new(&mut de, &mut record);
    let doc: SceneDocument = serde_path_to_error::deserialize(tracked).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        SceneError::Parse {
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| SceneError::Parse {
        line: e.line(),
        column: e.column(),
        field: ".".into(),
        message: e.to_string(),
    })?;
    if opts.strict {
        if let Some(first) = ignored.into_iter().next() {
            return Err(SceneError::UnknownField(first));
        }
    }
    doc.into_scene()
}

fn finite(field: &str, v: f64) -> Result<f64, SceneError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SceneError::invalid(field, "must be finite"))
    }
}

fn positive(field: &str, v: f64) -> Result<f64, SceneError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(SceneError::invalid(field, format!("must be positive, got {v}")))
    }
}

fn point(field: &str, p: [f64; 2]) -> Result<Vec2, SceneError> {
    let v = Vec2::new(p[0], p[1]);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SceneError::invalid(field, "non-finite coordinate"))
    }
}

fn timeline(field: &str, poses: &[PoseDoc]) -> Result<Vec<TimedPose>, SceneError> {
    let mut out: Vec<TimedPose> = Vec::with_capacity(poses.len());
    for (i, p) in poses.iter().enumerate() {
        let f = format!("{field}[{i}]");
        for (name, v) in [("t", p.t), ("x", p.x), ("y", p.y), ("yaw", p.yaw)] {
            finite(&format!("{f}.{name}"), v)?;
        }
        if let Some(prev) = out.last() {
            if p.t <= prev.t {
                return Err(SceneError::invalid(format!("{f}.t"), "timestamps must increase"));
            }
        }
        out.push(TimedPose {
            t: p.t,
            pose: Pose2::new(p.x, p.y, p.yaw),
        });
    }
    Ok(out)
}

fn ring(field: &str, pts: &[[f64; 2]]) -> Result<Ring, SceneError> {
    let pts = pts
        .iter()
        .enumerate()
        .map(|(i, &p)| point(&format!("{field}[{i}]"), p))
        .collect::<Result<Vec<_>, _>>()?;
    let ring = Ring::new(pts);
    if ring.distinct_vertices() < 3 {
        return Err(SceneError::invalid(field, "ring needs at least 3 distinct vertices"));
    }
    Ok(ring)
}

impl SceneDocument {
    pub fn into_scene(self) -> Result<Scene, SceneError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SceneError::invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        if self.scene_id.trim().is_empty() {
            return Err(SceneError::invalid("scene_id", "must not be empty"));
        }
        let key_time = finite("key_time", self.key_time)?;
        let (ego_length, ego_width) = match &self.ego {
            Some(e) => (positive("ego.length", e.length)?, positive("ego.width", e.width)?),
            None => (DEFAULT_EGO_LENGTH, DEFAULT_EGO_WIDTH),
        };

        let ego_poses = timeline("ego_poses", &self.ego_poses)?;
        if ego_poses.len() < 2 {
            return Err(SceneError::invalid("ego_poses", "need at least 2 samples"));
        }
        if key_time < ego_poses[0].t - 1e-9 || key_time > ego_poses[ego_poses.len() - 1].t + 1e-9 {
            return Err(SceneError::invalid("key_time", "not covered by ego_poses"));
        }

        let lane_ids: HashSet<&str> = self.lanes.iter().map(|l| l.id.as_str()).collect();
        let signal_ids: HashSet<&str> = self.signals.iter().map(|s| s.id.as_str()).collect();

        let mut seen = HashSet::new();
        let mut agents = Vec::with_capacity(self.agents.len());
        for (i, a) in self.agents.iter().enumerate() {
            let f = format!("agents[{i}]");
            if a.id.is_empty() || !seen.insert(a.id.as_str()) {
                return Err(SceneError::invalid(format!("{f}.id"), "empty or duplicate id"));
            }
            let poses = timeline(&format!("{f}.poses"), &a.poses)?;
            if poses.is_empty() {
                return Err(SceneError::invalid(format!("{f}.poses"), "need at least 1 pose"));
            }
            let velocity = a
                .velocity
                .map(|v| point(&format!("{f}.velocity"), v))
                .transpose()?;
            agents.push(AgentTrack {
                id: a.id.clone(),
                category: a.category.clone(),
                length: positive(&format!("{f}.length"), a.length)?,
                width: positive(&format!("{f}.width"), a.width)?,
                poses,
                velocity,
            });
        }

        let mut seen = HashSet::new();
        let mut lanes = Vec::with_capacity(self.lanes.len());
        for (i, l) in self.lanes.iter().enumerate() {
            let f = format!("lanes[{i}]");
            if l.id.is_empty() || !seen.insert(l.id.as_str()) {
                return Err(SceneError::invalid(format!("{f}.id"), "empty or duplicate id"));
            }
            if l.polyline.len() < 2 {
                return Err(SceneError::invalid(format!("{f}.polyline"), "need at least 2 points"));
            }
            let polyline = l
                .polyline
                .iter()
                .enumerate()
                .map(|(j, &p)| point(&format!("{f}.polyline[{j}]"), p))
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(j) = polyline.windows(2).position(|w| w[0].dist(w[1]) <= EPS) {
                return Err(SceneError::invalid(
                    format!("{f}.polyline[{}]", j + 1),
                    "repeats the previous point",
                ));
            }
            for (j, s) in l.successors.iter().enumerate() {
                if !lane_ids.contains(s.as_str()) {
                    return Err(SceneError::invalid(format!("{f}.successors[{j}]"), format!("unknown lane {s}")));
                }
            }
            for (name, n) in [("left", &l.left), ("right", &l.right)] {
                if let Some(n) = n {
                    if !lane_ids.contains(n.as_str()) {
                        return Err(SceneError::invalid(format!("{f}.{name}"), format!("unknown lane {n}")));
                    }
                }
            }
            for (j, s) in l.signal_ids.iter().enumerate() {
                if !signal_ids.contains(s.as_str()) {
                    return Err(SceneError::invalid(format!("{f}.signal_ids[{j}]"), format!("unknown signal {s}")));
                }
            }
            lanes.push(LaneCenterline {
                id: l.id.clone(),
                polyline,
                successors: l.successors.clone(),
                left: l.left.clone(),
                right: l.right.clone(),
                signal_ids: l.signal_ids.clone(),
                width: match l.width {
                    Some(w) => positive(&format!("{f}.width"), w)?,
                    None => DEFAULT_LANE_WIDTH,
                },
            });
        }

        let drivable = DrivableArea {
            outer: self
                .drivable
                .outer
                .iter()
                .enumerate()
                .map(|(i, r)| ring(&format!("drivable.outer[{i}]"), r))
                .collect::<Result<_, _>>()?,
            holes: self
                .drivable
                .holes
                .iter()
                .enumerate()
                .map(|(i, r)| ring(&format!("drivable.holes[{i}]"), r))
                .collect::<Result<_, _>>()?,
        };

        let mut seen = HashSet::new();
        let mut signals = Vec::with_capacity(self.signals.len());
        for (i, s) in self.signals.iter().enumerate() {
            let f = format!("signals[{i}]");
            if s.id.is_empty() || !seen.insert(s.id.as_str()) {
                return Err(SceneError::invalid(format!("{f}.id"), "empty or duplicate id"));
            }
            let stop_line = match s.stop_line.as_deref() {
                Some([a, b]) => {
                    let a = point(&format!("{f}.stop_line[0]"), *a)?;
                    let b = point(&format!("{f}.stop_line[1]"), *b)?;
                    if a.dist(b) <= EPS {
                        return Err(SceneError::invalid(format!("{f}.stop_line"), "degenerate segment"));
                    }
                    (a, b)
                }
                Some(_) => return Err(SceneError::invalid(format!("{f}.stop_line"), "need exactly 2 points")),
                None => return Err(SceneError::invalid(format!("{f}.stop_line"), "missing")),
            };
            for (j, l) in s.lanes.iter().enumerate() {
                if !lane_ids.contains(l.as_str()) {
                    return Err(SceneError::invalid(format!("{f}.lanes[{j}]"), format!("unknown lane {l}")));
                }
            }
            let mut states = s.states.clone();
            for (j, iv) in states.iter().enumerate() {
                if !(iv.start.is_finite() && iv.end.is_finite() && iv.start < iv.end) {
                    return Err(SceneError::invalid(format!("{f}.states[{j}]"), "need start < end"));
                }
                if iv.state == SignalState::Unknown {
                    return Err(SceneError::invalid(
                        format!("{f}.states[{j}].state"),
                        "use red, yellow or green; gaps are unknown",
                    ));
                }
            }
            states.sort_by(|a, b| a.start.total_cmp(&b.start));
            if states.windows(2).any(|w| w[1].start < w[0].end) {
                return Err(SceneError::invalid(format!("{f}.states"), "intervals overlap"));
            }
            signals.push(TrafficSignal {
                id: s.id.clone(),
                stop_line,
                lanes: s.lanes.clone(),
                states,
            });
        }

        Ok(Scene {
            scene_id: self.scene_id,
            key_time,
            ego_length,
            ego_width,
            ego_poses,
            agents,
            lanes,
            drivable,
            signals,
            caption: self.caption,
        })
    }
}

impl From<&Scene> for SceneDocument {
    fn from(s: &Scene) -> Self {
        let pose = |p: &TimedPose| PoseDoc {
            t: p.t,
            x: p.pose.x,
            y: p.pose.y,
            yaw: p.pose.yaw,
        };
        let xy = |p: &Vec2| [p.x, p.y];
        SceneDocument {
            schema_version: SCHEMA_VERSION.into(),
            scene_id: s.scene_id.clone(),
            key_time: s.key_time,
            ego: Some(EgoDoc {
                length: s.ego_length,
                width: s.ego_width,
            }),
            ego_poses: s.ego_poses.iter().map(pose).collect(),
            agents: s
                .agents
                .iter()
                .map(|a| AgentDoc {
                    id: a.id.clone(),
                    category: a.category.clone(),
                    length: a.length,
                    width: a.width,
                    poses: a.poses.iter().map(pose).collect(),
                    velocity: a.velocity.map(|v| [v.x, v.y]),
                })
                .collect(),
            lanes: s
                .lanes
                .iter()
                .map(|l| LaneDoc {
                    id: l.id.clone(),
                    polyline: l.polyline.iter().map(xy).collect(),
                    successors: l.successors.clone(),
                    left: l.left.clone(),
                    right: l.right.clone(),
                    signal_ids: l.signal_ids.clone(),
                    width: Some(l.width),
                })
                .collect(),
            drivable: DrivableDoc {
                outer: s.drivable.outer.iter().map(|r| r.vertices().iter().map(xy).collect()).collect(),
                holes: s.drivable.holes.iter().map(|r| r.vertices().iter().map(xy).collect()).collect(),
            },
            signals: s
                .signals
                .iter()
                .map(|g| SignalDoc {
                    id: g.id.clone(),
                    stop_line: Some(vec![xy(&g.stop_line.0), xy(&g.stop_line.1)]),
                    lanes: g.lanes.clone(),
                    states: g.states.clone(),
                })
                .collect(),
            caption: s.caption.clone(),
        }
    }
}
