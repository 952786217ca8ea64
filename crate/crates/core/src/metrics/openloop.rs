//! Open-loop planning metrics: L2 error and collision / road-boundary
//! intersection rates at 1, 2 and 3 s.

use crate::checklist::{check_collision, check_drivable, Violation};
use crate::config::RuleConfig;
use crate::scene::Scene;
use crate::trajectory::Trajectory;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use thiserror::Error;

pub const HORIZONS: [f64; 3] = [1.0, 2.0, 3.0];

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("trajectories differ in shape: {0}")]
    Shape(String),
}

/// Values at 1/2/3 s plus their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtHorizons {
    pub at: [f64; 3],
    pub avg: f64,
}

impl AtHorizons {
    pub fn new(at: [f64; 3]) -> Self {
        Self {
            at,
            avg: at.iter().sum::<f64>() / 3.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.at.iter().all(|x| x.is_finite()) && self.avg.is_finite()
    }
}

/// Index of the waypoint whose time is nearest `t` (earlier on ties).
fn nearest_waypoint(traj: &Trajectory, t: f64) -> usize {
    let mut best = 0;
    for (i, w) in traj.waypoints.iter().enumerate() {
        if (w.t - t).abs() < (traj.waypoints[best].t - t).abs() - 1e-12 {
            best = i;
        }
    }
    best
}

/// Distance at the waypoint nearest each horizon (not averaged up to it).
pub fn l2_at_horizons(pred: &Trajectory, gt: &Trajectory) -> Result<AtHorizons, MetricError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(MetricError::Shape(format!("{} vs {} waypoints", pred.len(), gt.len())));
    }
    if pred.waypoints.iter().zip(&gt.waypoints).any(|(a, b)| (a.t - b.t).abs() > 1e-9) {
        return Err(MetricError::Shape("waypoint times differ".into()));
    }
    let at = HORIZONS.map(|h| {
        let i = nearest_waypoint(gt, h);
        pred.waypoints[i].pos().dist(gt.waypoints[i].pos())
    });
    Ok(AtHorizons::new(at))
}

fn rate(samples: &[(&Scene, &Trajectory)], check: impl Fn(&Scene, &Trajectory) -> Vec<Violation> + Sync) -> AtHorizons {
    let first: Vec<Option<f64>> = samples
        .par_iter()
        .map(|(s, t)| check(s, t).iter().map(|v| v.time).min_by(f64::total_cmp))
        .collect();
    let n = first.len() as f64;
    AtHorizons::new(HORIZONS.map(|h| {
        let hits = first.iter().filter(|f| f.is_some_and(|t| t <= h + 1e-9)).count();
        100.0 * hits as f64 / n
    }))
}

/// Percent of samples with a collision within each horizon.
pub fn collision_rate(samples: &[(&Scene, &Trajectory)], config: &RuleConfig) -> AtHorizons {
    rate(samples, |s, t| check_collision(s, t, config))
}

/// Percent of samples leaving the drivable area within each horizon.
pub fn intersection_rate(samples: &[(&Scene, &Trajectory)], config: &RuleConfig) -> AtHorizons {
    rate(samples, |s, t| check_drivable(s, t, config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopReport {
    pub l2: AtHorizons,
    pub collision: AtHorizons,
    pub intersection: AtHorizons,
    pub samples: usize,
}

impl OpenLoopReport {
    pub fn has_undefined(&self) -> bool {
        !(self.l2.is_finite() && self.collision.is_finite() && self.intersection.is_finite())
    }

    /// Plain-text table: L2, collision and intersection at 1s/2s/3s/Avg.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8} | {:^31} | {:^31} | {:^31}",
            "", "L2 (m)", "Collision (%)", "Intersection (%)"
        );
        let head = format!("{:>7} {:>7} {:>7} {:>7}", "1s", "2s", "3s", "Avg");
        let _ = writeln!(s, "{:<8} | {head} | {head} | {head}", "");
        let row = |a: &AtHorizons| format!("{:>7.2} {:>7.2} {:>7.2} {:>7.2}", a.at[0], a.at[1], a.at[2], a.avg);
        let _ = writeln!(
            s,
            "{:<8} | {} | {} | {}",
            format!("n={}", self.samples),
            row(&self.l2),
            row(&self.collision),
            row(&self.intersection)
        );
        s
    }
}

/// Mean L2 over samples plus the rates of the predicted trajectories.
/// Aggregates over zero samples are NaN.
pub fn open_loop_report(
    samples: &[(&Scene, &Trajectory, &Trajectory)],
    config: &RuleConfig,
) -> Result<OpenLoopReport, MetricError> {
    let l2s = samples
        .iter()
        .map(|(_, p, g)| l2_at_horizons(p, g))
        .collect::<Result<Vec<_>, _>>()?;
    let n = l2s.len() as f64;
    let l2 = AtHorizons::new([0, 1, 2].map(|i| l2s.iter().map(|a| a.at[i]).sum::<f64>() / n));
    let preds: Vec<(&Scene, &Trajectory)> = samples.iter().map(|(s, p, _)| (*s, *p)).collect();
    Ok(OpenLoopReport {
        l2,
        collision: collision_rate(&preds, config),
        intersection: intersection_rate(&preds, config),
        samples: samples.len(),
    })
}
