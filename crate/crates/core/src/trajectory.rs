//! Timed ego-frame waypoint sequences.

use crate::geometry::{Vec2, EPS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_HORIZON: f64 = 3.0;
pub const DEFAULT_PERIOD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Seconds after the key timestamp.
    pub t: f64,
    /// Metres forward.
    pub x: f64,
    /// Metres leftward.
    pub y: f64,
}

impl Waypoint {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory has no waypoints")]
    Empty,
    #[error("period must be positive, got {0}")]
    BadPeriod(f64),
    #[error("waypoint {index}: {reason}")]
    BadWaypoint { index: usize, reason: String },
}

/// Waypoints in the ego frame at the key timestamp, implicitly starting from
/// the origin at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub period: f64,
    pub waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn new(period: f64, waypoints: Vec<Waypoint>) -> Result<Self, TrajectoryError> {
        let t = Trajectory { period, waypoints };
        t.validate()?;
        Ok(t)
    }

    /// Positions sampled at `period, 2 period, ...`.
    pub fn from_positions(period: f64, pts: &[(f64, f64)]) -> Result<Self, TrajectoryError> {
        let wps = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Waypoint {
                t: period * (i + 1) as f64,
                x,
                y,
            })
            .collect();
        Self::new(period, wps)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(TrajectoryError::BadPeriod(self.period));
        }
        if self.waypoints.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        let mut prev = 0.0;
        for (index, w) in self.waypoints.iter().enumerate() {
            if !(w.t.is_finite() && w.x.is_finite() && w.y.is_finite()) {
                return Err(TrajectoryError::BadWaypoint {
                    index,
                    reason: "non-finite value".into(),
                });
            }
            if w.t <= prev {
                return Err(TrajectoryError::BadWaypoint {
                    index,
                    reason: format!("time {} not after {}", w.t, prev),
                });
            }
            prev = w.t;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.t)
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.waypoints.iter().map(Waypoint::pos).collect()
    }

    /// Concatenated (x, y) feature vector.
    pub fn feature(&self) -> Vec<f64> {
        self.waypoints.iter().flat_map(|w| [w.x, w.y]).collect()
    }

    pub fn from_feature(period: f64, f: &[f64]) -> Result<Self, TrajectoryError> {
        let pts: Vec<(f64, f64)> = f.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        Self::from_positions(period, &pts)
    }

    /// Knots including the implicit origin at t = 0.
    pub(crate) fn knots(&self) -> Vec<(f64, Vec2)> {
        std::iter::once((0.0, Vec2::ZERO))
            .chain(self.waypoints.iter().map(|w| (w.t, w.pos())))
            .collect()
    }

    /// Position and heading at time `t`; see [`EgoPath::state_at`].
    pub fn state_at(&self, t: f64) -> (Vec2, f64) {
        EgoPath::new(self).state_at(t)
    }
}

/// Piecewise-linear motion through a trajectory's knots, with precomputed
/// segment headings.
#[derive(Debug, Clone)]
pub struct EgoPath {
    knots: Vec<(f64, Vec2)>,
    headings: Vec<f64>,
}

impl EgoPath {
    pub fn new(traj: &Trajectory) -> Self {
        let knots = traj.knots();
        let headings = segment_headings(&knots);
        Self { knots, headings }
    }

    /// Index (1-based, into the knots) of the segment covering `t`. A sample
    /// exactly on a knot belongs to the segment ending there.
    fn segment(&self, t: f64) -> usize {
        let last = self.knots.len() - 1;
        self.knots[1..]
            .iter()
            .position(|&(kt, _)| t <= kt + 1e-9)
            .map_or(last, |i| i + 1)
    }

    /// Linear interpolation of position and the heading of the segment in
    /// use. Degenerate segments inherit the previous heading (zero at the
    /// start); beyond the horizon the final position is held.
    pub fn state_at(&self, t: f64) -> (Vec2, f64) {
        let seg = self.segment(t);
        let (t0, p0) = self.knots[seg - 1];
        let (t1, p1) = self.knots[seg];
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        (p0.lerp(p1, s), self.headings[seg - 1])
    }

    /// Heading of the segment covering the half-open interval `(t0, t1]`.
    pub fn heading_over(&self, t1: f64) -> f64 {
        self.headings[self.segment(t1) - 1]
    }

    pub fn horizon(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.0)
    }
}

/// Heading of each knot-to-knot segment, carrying the previous heading
/// across zero-length segments.
pub(crate) fn segment_headings(knots: &[(f64, Vec2)]) -> Vec<f64> {
    let mut out = Vec::with_capacity(knots.len().saturating_sub(1));
    let mut prev = 0.0;
    for w in knots.windows(2) {
        let d = w[1].1 - w[0].1;
        if d.norm() > EPS.sqrt() {
            prev = d.angle();
        }
        out.push(prev);
    }
    out
}

/// Sub-step sample times `dt, 2 dt, ...` up to `horizon` (inclusive).
pub fn substep_times(horizon: f64, dt: f64) -> Vec<f64> {
    let n = (horizon / dt + 1e-9).floor() as usize;
    let mut ts: Vec<f64> = (1..=n).map(|k| k as f64 * dt).collect();
    if ts.last().map_or(true, |&t| horizon - t > 1e-9) {
        ts.push(horizon);
    }
    ts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_increasing_times() {
        let err = Trajectory::new(
            0.5,
            vec![
                Waypoint { t: 0.5, x: 0.0, y: 0.0 },
                Waypoint { t: 0.5, x: 1.0, y: 0.0 },
            ],
        )
        .unwrap_err();
        assert!(matches!(err, TrajectoryError::BadWaypoint { index: 1, .. }));
        assert_eq!(Trajectory::new(0.5, vec![]).unwrap_err(), TrajectoryError::Empty);
    }

    #[test]
    fn interpolates_and_holds() {
        let t = Trajectory::from_positions(0.5, &[(1.0, 0.0), (1.0, 1.0)]).unwrap();
        let (p, h) = t.state_at(0.25);
        assert!((p.x - 0.5).abs() < 1e-12 && h == 0.0);
        let (p, h) = t.state_at(0.5);
        assert!((p.x - 1.0).abs() < 1e-12 && h == 0.0);
        let (p, h) = t.state_at(0.75);
        assert!((p.y - 0.5).abs() < 1e-12);
        assert!((h - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(t.state_at(5.0).0, Vec2::new(1.0, 1.0));
    }

    #[test]
    fn substeps_cover_horizon() {
        let ts = substep_times(3.0, 0.1);
        assert_eq!(ts.len(), 30);
        assert!((ts[29] - 3.0).abs() < 1e-12);
        assert_eq!(substep_times(0.25, 0.1).len(), 3);
    }
}
