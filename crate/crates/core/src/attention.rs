//! Close objects around a trajectory and the lane-rooted attention tree.

use crate::config::RuleConfig;
use crate::geometry::{angle_diff, polyline_lateral, resample_polyline, Vec2};
use crate::scene::{EgoView, Scene};
use crate::trajectory::{substep_times, Trajectory};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

/// Lane polylines are listed with this many equal-arclength samples.
pub const LANE_SAMPLES: usize = 4;
/// Heading change (degrees) under which a lane renders as straight.
pub const STRAIGHT_LANE_DEG: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloseObject {
    pub agent_id: String,
    pub distance: f64,
    /// Seconds after the key timestamp at which the minimum is attained.
    pub time: f64,
}

/// Agents whose centre comes within `close_radius` of the ego position at
/// the same instant, over sub-steps in `(0, min(close_window, horizon)]`.
/// Sorted by distance, then agent id.
pub fn close_objects(scene: &Scene, traj: &Trajectory, config: &RuleConfig) -> Vec<CloseObject> {
    let view = scene.ego_view();
    let window = config.close_window.min(traj.horizon());
    let times = substep_times(window, config.substep_dt);
    let mut out: Vec<CloseObject> = scene
        .agents
        .iter()
        .filter_map(|agent| {
            let (time, distance) = times
                .iter()
                .map(|&t| (t, view.agent_pose(agent, t).pos().dist(traj.state_at(t).0)))
                .min_by(|a, b| a.1.total_cmp(&b.1))?;
            (distance < config.close_radius).then(|| CloseObject {
                agent_id: agent.id.clone(),
                distance,
                time,
            })
        })
        .collect();
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.agent_id.cmp(&b.agent_id)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionObject {
    pub agent_id: String,
    pub category: String,
    /// Ego-frame position at the key timestamp.
    pub position: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneEntry {
    pub lane_id: String,
    pub shape: LaneShape,
    pub samples: Vec<Vec2>,
    pub children: Vec<AttentionObject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaneShape {
    Straight,
    LeftTurn,
    RightTurn,
}

impl LaneShape {
    pub fn as_str(&self) -> &'static str {
        match self {
            LaneShape::Straight => "straight",
            LaneShape::LeftTurn => "left-turn",
            LaneShape::RightTurn => "right-turn",
        }
    }

    fn of(line: &[Vec2]) -> LaneShape {
        let n = line.len();
        if n < 2 {
            return LaneShape::Straight;
        }
        let first = (line[1] - line[0]).angle();
        let last = (line[n - 1] - line[n - 2]).angle();
        let turn = angle_diff(last, first).to_degrees();
        if turn > STRAIGHT_LANE_DEG {
            LaneShape::LeftTurn
        } else if turn < -STRAIGHT_LANE_DEG {
            LaneShape::RightTurn
        } else {
            LaneShape::Straight
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttentionTree {
    pub entries: Vec<LaneEntry>,
    pub orphans: Vec<AttentionObject>,
}

impl AttentionTree {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.orphans.is_empty()
    }

    pub fn objects(&self) -> impl Iterator<Item = &AttentionObject> {
        self.entries.iter().flat_map(|e| e.children.iter()).chain(&self.orphans)
    }

    /// Text form: lanes with their objects nested, then unassigned objects.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let pts: Vec<String> = e.samples.iter().map(|&p| fmt_point1(p)).collect();
            let _ = writeln!(s, "|--- {} lane [{}]", e.shape.as_str(), pts.join(", "));
            for c in &e.children {
                let _ = writeln!(s, "|   |--- {} at {}", c.category, fmt_point1(c.position));
            }
        }
        for o in &self.orphans {
            let _ = writeln!(s, "|--- {} at {}", o.category, fmt_point1(o.position));
        }
        s
    }
}

fn signed(v: f64, decimals: usize) -> String {
    let text = format!("{v:+.decimals$}");
    // "-0.0" and friends render as positive zero
    if text[1..].chars().all(|c| c == '0' || c == '.') {
        format!("+{}", &text[1..])
    } else {
        text
    }
}

/// `(+x.x, +y.y)` with one decimal and an explicit sign.
pub fn fmt_point1(p: Vec2) -> String {
    format!("({}, {})", signed(p.x, 1), signed(p.y, 1))
}

/// `(+x.xx, +y.yy)` with two decimals and an explicit sign.
pub fn fmt_point2(p: Vec2) -> String {
    format!("({}, {})", signed(p.x, 2), signed(p.y, 2))
}

/// Nearest lane by lateral distance only: objects such as cones carry no
/// meaningful heading.
fn lane_for_object(view: &EgoView<'_>, p: Vec2, config: &RuleConfig) -> Option<String> {
    view.lanes
        .iter()
        .map(|(id, line)| (polyline_lateral(p, line).distance, id))
        .filter(|(d, _)| *d <= config.lane_max_lateral)
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, id)| id.clone())
}

/// Attaches each close agent to its lane; lanes appear in the order of
/// their first (closest) object. Unknown agent ids are skipped.
pub fn build_attention_tree(scene: &Scene, close: &[CloseObject], config: &RuleConfig) -> AttentionTree {
    let view = scene.ego_view();
    let mut tree = AttentionTree::default();
    let mut seen = std::collections::HashSet::new();
    for c in close {
        let Some(agent) = scene.agent(&c.agent_id) else {
            continue;
        };
        if !seen.insert(agent.id.as_str()) {
            continue;
        }
        let obj = AttentionObject {
            agent_id: agent.id.clone(),
            category: agent.category.clone(),
            position: view.agent_pose(agent, 0.0).pos(),
        };
        match lane_for_object(&view, obj.position, config) {
            Some(lane_id) => {
                if let Some(e) = tree.entries.iter_mut().find(|e| e.lane_id == lane_id) {
                    e.children.push(obj);
                } else {
                    let line = &view.lanes[&lane_id];
                    tree.entries.push(LaneEntry {
                        shape: LaneShape::of(line),
                        samples: resample_polyline(line, LANE_SAMPLES),
                        lane_id,
                        children: vec![obj],
                    });
                }
            }
            None => tree.orphans.push(obj),
        }
    }
    tree
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Ring;
    use crate::scene::{AgentTrack, DrivableArea, LaneCenterline, Pose2, TimedPose};

    fn scene(agents: Vec<(&str, &str, f64, f64)>) -> Scene {
        Scene {
            scene_id: "a".into(),
            key_time: 0.0,
            ego_length: 4.0,
            ego_width: 2.0,
            ego_poses: vec![TimedPose { t: 0.0, pose: Pose2::new(0.0, 0.0, 0.0) }],
            agents: agents
                .into_iter()
                .map(|(id, cat, x, y)| AgentTrack {
                    id: id.into(),
                    category: cat.into(),
                    length: 0.5,
                    width: 0.5,
                    poses: vec![TimedPose { t: 0.0, pose: Pose2::new(x, y, 0.0) }],
                    velocity: None,
                })
                .collect(),
            lanes: vec![LaneCenterline {
                id: "l".into(),
                polyline: vec![Vec2::new(-3.0, 0.0), Vec2::new(9.0, 0.0)],
                successors: vec![],
                left: None,
                right: None,
                signal_ids: vec![],
                width: 3.5,
            }],
            drivable: DrivableArea {
                outer: vec![Ring::new(vec![
                    Vec2::new(-50.0, -50.0),
                    Vec2::new(50.0, -50.0),
                    Vec2::new(50.0, 50.0),
                    Vec2::new(-50.0, 50.0),
                ])],
                holes: vec![],
            },
            signals: vec![],
            caption: None,
        }
    }

    fn straight() -> Trajectory {
        Trajectory::from_positions(0.5, &[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0), (5.0, 0.0), (6.0, 0.0)]).unwrap()
    }

    #[test]
    fn threshold_boundary() {
        let s = scene(vec![("far", "x", 3.0, 10.1), ("near", "x", 3.0, 9.9)]);
        let c = close_objects(&s, &straight(), &RuleConfig::default());
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].agent_id, "near");
        assert!(close_objects(&scene(vec![]), &straight(), &RuleConfig::default()).is_empty());
    }

    #[test]
    fn cone_on_lane_and_orphan() {
        let s = scene(vec![("cone", "movable_object.trafficcone", 5.0, 0.4), ("ped", "human.pedestrian.adult", 4.0, -7.0)]);
        let cfg = RuleConfig::default();
        let c = close_objects(&s, &straight(), &cfg);
        let tree = build_attention_tree(&s, &c, &cfg);
        assert_eq!(tree.entries.len(), 1);
        assert_eq!(tree.entries[0].children.len(), 1);
        assert_eq!(tree.orphans.len(), 1);
        assert_eq!(
            tree.render(),
            "|--- straight lane [(-3.0, +0.0), (+1.0, +0.0), (+5.0, +0.0), (+9.0, +0.0)]\n\
             |   |--- movable_object.trafficcone at (+5.0, +0.4)\n\
             |--- human.pedestrian.adult at (+4.0, -7.0)\n"
        );
        assert_eq!(tree.render(), build_attention_tree(&s, &c, &cfg).render());
    }

    #[test]
    fn signed_formatting() {
        assert_eq!(fmt_point2(Vec2::new(-0.001, 0.0)), "(+0.00, +0.00)");
        assert_eq!(fmt_point2(Vec2::new(0.76, -0.02)), "(+0.76, -0.02)");
        assert_eq!(fmt_point1(Vec2::new(-2.6, 0.5)), "(-2.6, +0.5)");
    }
}
