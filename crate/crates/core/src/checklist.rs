//! Counterfactual rule checklist: collision, drivable area and red light,
//! plus lane assignment and lane-change detection.
//!
//! The ego box follows the trajectory piecewise-linearly with the heading of
//! the current segment. Checks sweep each sub-step interval (refined at
//! waypoint times) and report the sub-step grid time that closes the
//! interval where the violation starts.

use crate::config::RuleConfig;
use crate::geometry::{angle_diff, polyline_lateral, segments_intersect, swept_overlap, OrientedBox, Vec2};
use crate::maneuver::{classify_decision, Candidate, HighLevelDecision, LaneBehavior};
use crate::scene::{EgoView, Scene, SignalState};
use crate::trajectory::{substep_times, EgoPath, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ViolationKind {
    Collision { agent_id: String },
    OutOfDrivableArea,
    RedLight { signal_id: String },
}

impl ViolationKind {
    pub fn category(&self) -> Category {
        match self {
            ViolationKind::Collision { .. } => Category::Collision,
            ViolationKind::OutOfDrivableArea => Category::DrivableArea,
            ViolationKind::RedLight { .. } => Category::RedLight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Sub-step grid time, seconds after the key timestamp.
    pub time: f64,
    /// Ego-frame ego centre at `time`.
    pub location: Vec2,
}

/// Verdict categories shared by the checklist, QA templates and metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "safety")]
    Safety,
    #[serde(rename = "collision")]
    Collision,
    #[serde(rename = "red light")]
    RedLight,
    #[serde(rename = "drivable area")]
    DrivableArea,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Safety,
        Category::Collision,
        Category::RedLight,
        Category::DrivableArea,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Safety => "safety",
            Category::Collision => "collision",
            Category::RedLight => "red light",
            Category::DrivableArea => "drivable area",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualVerdict {
    pub trajectory_id: String,
    pub decision: HighLevelDecision,
    pub safe: bool,
    pub violations: Vec<Violation>,
    /// Lane at t = 0 and at every waypoint.
    pub lanes: Vec<Option<String>>,
    /// A red light was judged without a lane assignment.
    #[serde(default)]
    pub red_light_fallback: bool,
}

impl CounterfactualVerdict {
    /// `{safety}` for a safe trajectory, else the violated categories.
    pub fn categories(&self) -> BTreeSet<Category> {
        if self.safe {
            BTreeSet::from([Category::Safety])
        } else {
            self.violations.iter().map(|v| v.kind.category()).collect()
        }
    }

    /// One line per violated category, "Safe" otherwise.
    pub fn summary(&self) -> String {
        if self.safe {
            return "Safe".into();
        }
        let mut lines = Vec::new();
        for v in &self.violations {
            let line = match &v.kind {
                ViolationKind::Collision { agent_id } => format!("Collision with {agent_id}"),
                ViolationKind::OutOfDrivableArea => "Out of the drivable area".into(),
                ViolationKind::RedLight { signal_id } => format!("Running a red light ({signal_id})"),
            };
            if !lines.contains(&line) {
                lines.push(line);
            }
        }
        lines.join("\n")
    }
}

/// One swept piece `(t0, t1]` of the trajectory and the grid time reported
/// for anything starting inside it.
#[derive(Debug, Clone, Copy)]
struct Piece {
    t0: f64,
    t1: f64,
    report: f64,
    heading: f64,
    p0: Vec2,
    p1: Vec2,
}

fn pieces(traj: &Trajectory, dt: f64) -> Vec<Piece> {
    let path = EgoPath::new(traj);
    let grid = substep_times(traj.horizon(), dt);
    let mut cuts: Vec<f64> = grid.clone();
    cuts.extend(traj.waypoints.iter().map(|w| w.t));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mut out = Vec::with_capacity(cuts.len());
    let mut prev = 0.0;
    let mut g = 0;
    for &t in &cuts {
        while g + 1 < grid.len() && grid[g] < t - 1e-9 {
            g += 1;
        }
        let heading = path.heading_over(t);
        out.push(Piece {
            t0: prev,
            t1: t,
            report: grid[g],
            heading,
            p0: path.state_at(prev).0,
            p1: path.state_at(t).0,
        });
        prev = t;
    }
    out
}

pub fn check_collision(scene: &Scene, traj: &Trajectory, config: &RuleConfig) -> Vec<Violation> {
    collisions_in(&scene.ego_view(), traj, config)
}

fn collisions_in(view: &EgoView<'_>, traj: &Trajectory, config: &RuleConfig) -> Vec<Violation> {
    let pieces = pieces(traj, config.substep_dt);
    let mut out = Vec::new();
    for agent in &view.scene.agents {
        let rigid = agent.constant_yaw();
        let hit = pieces.iter().find(|pc| {
            let e0 = view.ego_box(pc.p0, pc.heading);
            let e1 = view.ego_box(pc.p1, pc.heading);
            let a0 = view.agent_box(agent, pc.t0);
            let a1 = view.agent_box(agent, pc.t1);
            if rigid || (a0.yaw - a1.yaw).abs() < 1e-12 {
                return swept_overlap(&e0, &e1, &a0, &a1).is_some();
            }
            // rotating agent: sweep short slices with the slice-midpoint yaw
            const SLICES: usize = 8;
            (0..SLICES).any(|i| {
                let s0 = i as f64 / SLICES as f64;
                let s1 = (i + 1) as f64 / SLICES as f64;
                let at = |s: f64| pc.t0 + (pc.t1 - pc.t0) * s;
                let yaw = view.agent_pose(agent, at(0.5 * (s0 + s1))).yaw;
                let slice = |s: f64| OrientedBox {
                    yaw,
                    ..view.agent_box(agent, at(s))
                };
                let ego = |s: f64| view.ego_box(pc.p0.lerp(pc.p1, s), pc.heading);
                swept_overlap(&ego(s0), &ego(s1), &slice(s0), &slice(s1)).is_some()
            })
        });
        if let Some(pc) = hit {
            out.push(Violation {
                kind: ViolationKind::Collision {
                    agent_id: agent.id.clone(),
                },
                time: pc.report,
                location: traj.state_at(pc.report).0,
            });
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then_with(|| a.kind.cmp(&b.kind)));
    out
}

pub fn check_drivable(scene: &Scene, traj: &Trajectory, config: &RuleConfig) -> Vec<Violation> {
    drivable_in(&scene.ego_view(), traj, config)
}

fn drivable_in(view: &EgoView<'_>, traj: &Trajectory, config: &RuleConfig) -> Vec<Violation> {
    let outside = |b: &OrientedBox| b.corners().iter().any(|&c| !view.drivable.contains(c));
    pieces(traj, config.substep_dt)
        .iter()
        .find(|pc| outside(&view.ego_box(pc.p0, pc.heading)) || outside(&view.ego_box(pc.p1, pc.heading)))
        .map(|pc| Violation {
            kind: ViolationKind::OutOfDrivableArea,
            time: pc.report,
            location: traj.state_at(pc.report).0,
        })
        .into_iter()
        .collect()
}

pub fn check_red_light(scene: &Scene, traj: &Trajectory, config: &RuleConfig) -> Vec<Violation> {
    red_lights_in(&scene.ego_view(), traj, config).0
}

fn red_lights_in(view: &EgoView<'_>, traj: &Trajectory, config: &RuleConfig) -> (Vec<Violation>, bool) {
    let scene = view.scene;
    let pieces = pieces(traj, config.substep_dt);
    let mut out = Vec::new();
    let mut fallback = false;
    for (signal, &stop) in scene.signals.iter().zip(&view.stop_lines) {
        for pc in &pieces {
            let Some(c) = segments_intersect((pc.p0, pc.p1), stop) else {
                continue;
            };
            let len = pc.p0.dist(pc.p1);
            let frac = if len > 0.0 { c.dist(pc.p0) / len } else { 0.0 };
            let t_cross = pc.t0 + frac * (pc.t1 - pc.t0);
            if signal.state_at(scene.key_time + t_cross) != SignalState::Red {
                continue;
            }
            let lane = assign_lane_in(view, pc.p0, pc.heading, config)
                .or_else(|| assign_lane_in(view, pc.p1, pc.heading, config));
            let controlled = match &lane {
                Some(id) => {
                    signal.lanes.contains(id)
                        || scene.lane(id).is_some_and(|l| l.signal_ids.contains(&signal.id))
                }
                None => {
                    fallback = true;
                    true
                }
            };
            if controlled {
                out.push(Violation {
                    kind: ViolationKind::RedLight {
                        signal_id: signal.id.clone(),
                    },
                    time: pc.report,
                    location: traj.state_at(pc.report).0,
                });
                break;
            }
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then_with(|| a.kind.cmp(&b.kind)));
    (out, fallback)
}

/// Nearest lane (by absolute lateral offset, then id) within the lateral and
/// heading gates. `p` and `heading` are in the ego frame.
pub fn assign_lane(scene: &Scene, p: Vec2, heading: f64, config: &RuleConfig) -> Option<String> {
    assign_lane_in(&scene.ego_view(), p, heading, config)
}

pub fn assign_lane_in(view: &EgoView<'_>, p: Vec2, heading: f64, config: &RuleConfig) -> Option<String> {
    let max_heading = config.lane_max_heading();
    view.lanes
        .iter()
        .filter_map(|(id, line)| {
            let proj = polyline_lateral(p, line);
            (proj.distance <= config.lane_max_lateral && angle_diff(heading, proj.heading).abs() <= max_heading)
                .then_some((proj.distance, id))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, id)| id.clone())
}

/// Lane keeping unless the assignment moves to a declared neighbour;
/// following a successor is not a change. Missing assignments, or jumps to
/// unrelated lanes, are `Unknown`.
pub fn detect_lane_change(seq: &[Option<String>], scene: &Scene) -> LaneBehavior {
    let Some(ids) = seq.iter().cloned().collect::<Option<Vec<String>>>() else {
        return LaneBehavior::Unknown;
    };
    if ids.is_empty() {
        return LaneBehavior::Unknown;
    }
    for w in ids.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a == b {
            continue;
        }
        let (Some(la), Some(lb)) = (scene.lane(a), scene.lane(b)) else {
            return LaneBehavior::Unknown;
        };
        if la.successors.contains(b) {
            continue;
        }
        if la.left.as_ref() == Some(b) || lb.right.as_ref() == Some(a) {
            return LaneBehavior::LaneChangeLeft;
        }
        if la.right.as_ref() == Some(b) || lb.left.as_ref() == Some(a) {
            return LaneBehavior::LaneChangeRight;
        }
        return LaneBehavior::Unknown;
    }
    LaneBehavior::LaneKeeping
}

/// Lane assignment at t = 0 and at each waypoint.
pub fn lane_sequence(view: &EgoView<'_>, traj: &Trajectory, config: &RuleConfig) -> Vec<Option<String>> {
    let path = EgoPath::new(traj);
    std::iter::once((Vec2::ZERO, 0.0))
        .chain(traj.waypoints.iter().map(|w| (w.pos(), path.heading_over(w.t))))
        .map(|(p, h)| assign_lane_in(view, p, h, config))
        .collect()
}

pub fn run_checklist(scene: &Scene, trajectory_id: &str, traj: &Trajectory, config: &RuleConfig) -> CounterfactualVerdict {
    let view = scene.ego_view();
    run_in(&view, trajectory_id, traj, config)
}

fn run_in(view: &EgoView<'_>, trajectory_id: &str, traj: &Trajectory, config: &RuleConfig) -> CounterfactualVerdict {
    let mut violations = collisions_in(view, traj, config);
    violations.extend(drivable_in(view, traj, config));
    let (red, red_light_fallback) = red_lights_in(view, traj, config);
    violations.extend(red);
    violations.sort_by(|a, b| a.time.total_cmp(&b.time).then_with(|| a.kind.cmp(&b.kind)));

    let lanes = lane_sequence(view, traj, config);
    let mut decision = classify_decision(traj, config);
    decision.lane_behavior = detect_lane_change(&lanes, view.scene);
    CounterfactualVerdict {
        trajectory_id: trajectory_id.to_string(),
        decision,
        safe: violations.is_empty(),
        violations,
        lanes,
        red_light_fallback,
    }
}

/// Verdicts for many candidates of one scene, in input order.
pub fn check_candidates(scene: &Scene, candidates: &[Candidate], config: &RuleConfig) -> Vec<CounterfactualVerdict> {
    let view = scene.ego_view();
    candidates
        .par_iter()
        .map(|c| run_in(&view, &c.id, &c.trajectory, config))
        .collect()
}
