//! High-level decision labels and the clustered library of simulated
//! maneuvers.

use crate::config::RuleConfig;
use crate::geometry::{angle_diff, polyline_length, polyline_point_at, Vec2};
use crate::keyframe::{kmeans, KMeansError, KMeansParams};
use crate::scene::Scene;
use crate::trajectory::{segment_headings, Trajectory, TrajectoryError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

pub const LIBRARY_SCHEMA: &str = "omnidrive_library_v1";
/// Library size when not configured.
pub const DEFAULT_LIBRARY_K: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpeedClass {
    #[serde(rename = "Stop")]
    Stop,
    #[serde(rename = "Moving Slowly")]
    MovingSlowly,
    #[serde(rename = "Moderate Speed")]
    ModerateSpeed,
    #[serde(rename = "Fast")]
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Longitudinal {
    Accelerating,
    Decelerating,
    #[serde(rename = "Constant Speed")]
    ConstantSpeed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lateral {
    #[serde(rename = "Go Straight")]
    GoStraight,
    #[serde(rename = "Left Turn")]
    LeftTurn,
    #[serde(rename = "Right Turn")]
    RightTurn,
    #[serde(rename = "U-Turn")]
    UTurn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LaneBehavior {
    #[serde(rename = "Lane Keeping")]
    LaneKeeping,
    #[serde(rename = "Lane Change Left")]
    LaneChangeLeft,
    #[serde(rename = "Lane Change Right")]
    LaneChangeRight,
    Unknown,
}

macro_rules! display_via_serde_names {
    ($($ty:ty => { $($var:ident = $s:literal),* $(,)? }),* $(,)?) => {
        $(impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $(Self::$var => $s),* }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        })*
    };
}

display_via_serde_names! {
    SpeedClass => { Stop = "Stop", MovingSlowly = "Moving Slowly", ModerateSpeed = "Moderate Speed", Fast = "Fast" },
    Longitudinal => { Accelerating = "Accelerating", Decelerating = "Decelerating", ConstantSpeed = "Constant Speed" },
    Lateral => { GoStraight = "Go Straight", LeftTurn = "Left Turn", RightTurn = "Right Turn", UTurn = "U-Turn" },
    LaneBehavior => { LaneKeeping = "Lane Keeping", LaneChangeLeft = "Lane Change Left", LaneChangeRight = "Lane Change Right", Unknown = "Unknown" },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HighLevelDecision {
    pub speed: SpeedClass,
    pub longitudinal: Longitudinal,
    pub lateral: Lateral,
    pub lane_behavior: LaneBehavior,
}

impl HighLevelDecision {
    /// Prompt rendering: "speed, lane behaviour, lateral", the lane part
    /// omitted while unknown.
    pub fn text(&self) -> String {
        match self.lane_behavior {
            LaneBehavior::Unknown => format!("{}, {}", self.speed, self.lateral),
            lb => format!("{}, {}, {}", self.speed, lb, self.lateral),
        }
    }

    /// "speed, lateral": how simulated candidates are described.
    pub fn maneuver_text(&self) -> String {
        format!("{}, {}", self.speed, self.lateral)
    }

    /// Lane-independent label used for ordering library entries.
    pub fn label(&self) -> String {
        format!("{}, {}, {}", self.speed, self.longitudinal, self.lateral)
    }
}

impl fmt::Display for HighLevelDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// Labels a trajectory from its kinematics alone; `lane_behavior` is left
/// `Unknown` (lane topology is the checklist's job).
///
/// Waypoints that do not advance in time are ignored, so a repeated final
/// sample cannot change the label.
pub fn classify_decision(traj: &Trajectory, config: &RuleConfig) -> HighLevelDecision {
    let th = &config.maneuver;
    let mut knots: Vec<(f64, Vec2)> = vec![(0.0, Vec2::ZERO)];
    for w in &traj.waypoints {
        if w.t > knots[knots.len() - 1].0 {
            knots.push((w.t, w.pos()));
        }
    }
    let stop = HighLevelDecision {
        speed: SpeedClass::Stop,
        longitudinal: Longitudinal::ConstantSpeed,
        lateral: Lateral::GoStraight,
        lane_behavior: LaneBehavior::Unknown,
    };
    if knots.len() < 2 {
        return stop;
    }
    let pts: Vec<Vec2> = knots.iter().map(|k| k.1).collect();
    let length = polyline_length(&pts);
    let duration = knots[knots.len() - 1].0;
    let mean_speed = length / duration;
    if length < th.stop_distance || mean_speed < th.stop_speed {
        return stop;
    }
    let speed = if mean_speed < th.slow_speed {
        SpeedClass::MovingSlowly
    } else if mean_speed < th.moderate_speed {
        SpeedClass::ModerateSpeed
    } else {
        SpeedClass::Fast
    };

    let seg_speed = |i: usize| knots[i + 1].1.dist(knots[i].1) / (knots[i + 1].0 - knots[i].0);
    let dv = seg_speed(knots.len() - 2) - seg_speed(0);
    let longitudinal = if dv > th.accel_delta {
        Longitudinal::Accelerating
    } else if dv < -th.accel_delta {
        Longitudinal::Decelerating
    } else {
        Longitudinal::ConstantSpeed
    };

    // the ego frame puts the initial heading at zero
    let final_heading = *segment_headings(&knots).last().expect("at least one segment");
    let turn = angle_diff(final_heading, 0.0).to_degrees();
    let lateral = if turn.abs() < th.straight_deg {
        Lateral::GoStraight
    } else if turn.abs() < th.uturn_deg {
        if turn > 0.0 {
            Lateral::LeftTurn
        } else {
            Lateral::RightTurn
        }
    } else {
        Lateral::UTurn
    };

    HighLevelDecision {
        speed,
        longitudinal,
        lateral,
        lane_behavior: LaneBehavior::Unknown,
    }
}

#[derive(Debug, Error)]
pub enum ManeuverError {
    #[error("no trajectories to cluster")]
    Empty,
    #[error("trajectory {index} has {found} waypoints at period {period}, expected {expected} at {expected_period}")]
    Shape {
        index: usize,
        found: usize,
        period: f64,
        expected: usize,
        expected_period: f64,
    },
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("library file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub trajectory: Trajectory,
    pub decision: HighLevelDecision,
    pub cluster_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverLibrary {
    pub schema_version: String,
    pub period: f64,
    pub horizon: f64,
    pub entries: Vec<LibraryEntry>,
}

impl ManeuverLibrary {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManeuverError> {
        let text = std::fs::read_to_string(path)?;
        let lib: ManeuverLibrary = serde_json::from_str(&text).map_err(|e| ManeuverError::Format(e.to_string()))?;
        if lib.schema_version != LIBRARY_SCHEMA {
            return Err(ManeuverError::Format(format!(
                "expected schema {LIBRARY_SCHEMA}, found {}",
                lib.schema_version
            )));
        }
        for e in &lib.entries {
            e.trajectory.validate()?;
        }
        Ok(lib)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("library serialises")
    }
}

/// k-means over concatenated waypoint coordinates; each centre becomes a
/// library entry labelled by [`classify_decision`].
pub fn cluster_trajectories(
    trajs: &[Trajectory],
    k: usize,
    seed: u64,
    config: &RuleConfig,
) -> Result<ManeuverLibrary, ManeuverError> {
    let first = trajs.first().ok_or(ManeuverError::Empty)?;
    for (index, t) in trajs.iter().enumerate() {
        let same_times = t.len() == first.len()
            && t.waypoints.iter().zip(&first.waypoints).all(|(a, b)| (a.t - b.t).abs() < 1e-9);
        if !same_times || (t.period - first.period).abs() > 1e-12 {
            return Err(ManeuverError::Shape {
                index,
                found: t.len(),
                period: t.period,
                expected: first.len(),
                expected_period: first.period,
            });
        }
    }
    let data: Vec<Vec<f64>> = trajs.iter().map(Trajectory::feature).collect();
    let result = kmeans(&data, &KMeansParams::new(k, seed))?;
    let sizes = result.cluster_sizes();
    let entries = result
        .centroids
        .iter()
        .zip(sizes)
        .map(|(c, cluster_size)| {
            let mut trajectory = first.clone();
            for (w, xy) in trajectory.waypoints.iter_mut().zip(c.chunks_exact(2)) {
                w.x = xy[0];
                w.y = xy[1];
            }
            let decision = classify_decision(&trajectory, config);
            LibraryEntry {
                trajectory,
                decision,
                cluster_size,
            }
        })
        .collect();
    Ok(ManeuverLibrary {
        schema_version: LIBRARY_SCHEMA.into(),
        period: first.period,
        horizon: first.horizon(),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub trajectory: Trajectory,
}

pub const EXPERT_ID: &str = "expert";

/// Ego speed at the key timestamp from a short forward (else backward)
/// finite difference of the logged poses.
pub fn ego_speed_at_key(scene: &Scene) -> f64 {
    let h = 0.1;
    let k = scene.key_time;
    let (a, b) = match (scene.ego_pose_at(k), scene.ego_pose_at(k + h), scene.ego_pose_at(k - h)) {
        (Some(a), Some(b), _) => (a, b),
        (Some(a), None, Some(prev)) => (prev, a),
        _ => return 0.0,
    };
    a.pos().dist(b.pos()) / h
}

/// Re-times a trajectory along its own path so that its first-segment
/// speed matches `target_speed`; the path shape is kept and extended along
/// the final direction when needed.
pub fn speed_aligned(traj: &Trajectory, target_speed: f64) -> Trajectory {
    let first = &traj.waypoints[0];
    let v0 = first.pos().norm() / first.t;
    if v0 < 1e-6 {
        return traj.clone();
    }
    let factor = target_speed / v0;
    let mut path: Vec<Vec2> = std::iter::once(Vec2::ZERO).chain(traj.positions()).collect();
    path.dedup_by(|a, b| a.dist(*b) < 1e-9);
    let mut cum = vec![0.0];
    let mut pts = vec![Vec2::ZERO];
    for w in &traj.waypoints {
        let last = pts[pts.len() - 1];
        cum.push(cum[cum.len() - 1] + w.pos().dist(last));
        pts.push(w.pos());
    }
    let total = polyline_length(&path);
    let end_dir = match path.as_slice() {
        [.., a, b] => (*b - *a) * (1.0 / b.dist(*a)),
        _ => Vec2::new(1.0, 0.0),
    };
    let mut out = traj.clone();
    for (w, s) in out.waypoints.iter_mut().zip(&cum[1..]) {
        let target = s * factor;
        let p = if target <= total {
            polyline_point_at(&path, target)
        } else {
            path[path.len() - 1] + end_dir * (target - total)
        };
        w.x = p.x;
        w.y = p.y;
    }
    out
}

/// Up to `limit` library trajectories as scene candidates, ordered by
/// cluster size (descending) then decision label.
pub fn instantiate_candidates(
    scene: &Scene,
    lib: &ManeuverLibrary,
    limit: usize,
    speed_align: bool,
) -> Vec<Candidate> {
    let mut order: Vec<usize> = (0..lib.entries.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&lib.entries[a], &lib.entries[b]);
        eb.cluster_size
            .cmp(&ea.cluster_size)
            .then_with(|| ea.decision.label().cmp(&eb.decision.label()))
            .then(a.cmp(&b))
    });
    let ego_speed = speed_align.then(|| ego_speed_at_key(scene));
    order
        .into_iter()
        .take(limit)
        .enumerate()
        .map(|(rank, i)| {
            let t = &lib.entries[i].trajectory;
            Candidate {
                id: format!("sim-{rank:03}"),
                trajectory: match ego_speed {
                    Some(v) => speed_aligned(t, v),
                    None => t.clone(),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Waypoint;

    fn cfg() -> RuleConfig {
        RuleConfig::default()
    }

    fn traj(pts: &[(f64, f64)]) -> Trajectory {
        Trajectory::from_positions(0.5, pts).unwrap()
    }

    #[test]
    fn zero_waypoints_stop() {
        let d = classify_decision(&traj(&[(0.0, 0.0); 6]), &cfg());
        assert_eq!(d.speed, SpeedClass::Stop);
        assert_eq!(d.lateral, Lateral::GoStraight);
        assert_eq!(d.longitudinal, Longitudinal::ConstantSpeed);
    }

    #[test]
    fn two_metres_per_second_straight() {
        // mean speed 2 m/s < 4, no heading change, equal segment speeds
        let t = traj(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0), (5.0, 0.0), (6.0, 0.0)]);
        let d = classify_decision(&t, &cfg());
        assert_eq!(
            (d.speed, d.lateral, d.longitudinal),
            (SpeedClass::MovingSlowly, Lateral::GoStraight, Longitudinal::ConstantSpeed)
        );
        assert_eq!(d.text(), "Moving Slowly, Go Straight");
    }

    #[test]
    fn turns_and_uturn() {
        let left: Vec<(f64, f64)> = (1..=6)
            .map(|i| {
                let a = 0.3 * i as f64;
                (10.0 * a.sin(), 10.0 * (1.0 - a.cos()))
            })
            .collect();
        assert_eq!(classify_decision(&traj(&left), &cfg()).lateral, Lateral::LeftTurn);
        let right: Vec<(f64, f64)> = left.iter().map(|&(x, y)| (x, -y)).collect();
        assert_eq!(classify_decision(&traj(&right), &cfg()).lateral, Lateral::RightTurn);
        let u: Vec<(f64, f64)> = (1..=6)
            .map(|i| {
                let a = std::f64::consts::PI * i as f64 / 6.0;
                (4.0 * a.sin(), 4.0 * (1.0 - a.cos()))
            })
            .collect();
        assert_eq!(classify_decision(&traj(&u), &cfg()).lateral, Lateral::UTurn);
    }

    #[test]
    fn accelerating_and_decelerating() {
        let acc: Vec<(f64, f64)> = (1..=6).map(|i| (0.5 * (i * i) as f64, 0.0)).collect();
        assert_eq!(classify_decision(&traj(&acc), &cfg()).longitudinal, Longitudinal::Accelerating);
        let dec: Vec<(f64, f64)> = (1..=6).map(|i| (12.0 * i as f64 - 0.6 * (i * i) as f64 * 1.5, 0.0)).collect();
        assert_eq!(classify_decision(&traj(&dec), &cfg()).longitudinal, Longitudinal::Decelerating);
    }

    #[test]
    fn duplicate_final_sample_ignored() {
        let mut t = traj(&[(1.0, 0.0), (2.2, 0.1), (3.5, 0.4), (4.9, 0.9), (6.2, 1.6), (7.4, 2.5)]);
        let before = classify_decision(&t, &cfg());
        let last = *t.waypoints.last().unwrap();
        t.waypoints.push(Waypoint { ..last });
        assert_eq!(classify_decision(&t, &cfg()), before);
    }

    #[test]
    fn cluster_three_copies() {
        let t = traj(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.1), (4.0, 0.2), (5.0, 0.2), (6.0, 0.3)]);
        let lib = cluster_trajectories(&[t.clone(), t.clone(), t.clone()], 1, 0, &cfg()).unwrap();
        assert_eq!(lib.entries.len(), 1);
        let got = lib.entries[0].trajectory.feature();
        assert!(got.iter().zip(t.feature()).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(lib.entries[0].cluster_size, 3);
    }

    #[test]
    fn cluster_errors() {
        assert!(matches!(cluster_trajectories(&[], 1, 0, &cfg()), Err(ManeuverError::Empty)));
        let t = traj(&[(1.0, 0.0)]);
        assert!(matches!(
            cluster_trajectories(&[t], 2, 0, &cfg()),
            Err(ManeuverError::KMeans(KMeansError::KTooLarge { .. }))
        ));
        let a = traj(&[(1.0, 0.0)]);
        let b = traj(&[(1.0, 0.0), (2.0, 0.0)]);
        assert!(matches!(cluster_trajectories(&[a, b], 1, 0, &cfg()), Err(ManeuverError::Shape { index: 1, .. })));
    }

    #[test]
    fn speed_alignment_keeps_path() {
        let t = traj(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        let fast = speed_aligned(&t, 4.0);
        let xs: Vec<f64> = fast.waypoints.iter().map(|w| w.x).collect();
        assert_eq!(xs, vec![2.0, 4.0, 6.0]);
    }
}
