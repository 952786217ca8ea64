use crate::trajectory::{DEFAULT_HORIZON, DEFAULT_PERIOD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("invalid rule config: {0}")]
pub struct ConfigError(pub String);

/// Thresholds for the checklist, lane assignment, close-object search and
/// maneuver labelling. Angles are stored in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    /// Trajectory horizon and waypoint period, seconds.
    pub horizon: f64,
    pub period: f64,
    /// Sub-step for swept checks, seconds.
    pub substep_dt: f64,
    pub lane_max_lateral: f64,
    pub lane_max_heading_deg: f64,
    pub close_radius: f64,
    pub close_window: f64,
    pub maneuver: ManeuverThresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManeuverThresholds {
    /// Path length below which the trajectory is a stop, metres.
    pub stop_distance: f64,
    /// Mean-speed class upper bounds, m/s.
    pub stop_speed: f64,
    pub slow_speed: f64,
    pub moderate_speed: f64,
    /// |v_end - v_start| above which the motion accelerates / decelerates, m/s.
    pub accel_delta: f64,
    /// Net heading change bounds, degrees.
    pub straight_deg: f64,
    pub uturn_deg: f64,
}

impl Default for ManeuverThresholds {
    fn default() -> Self {
        Self {
            stop_distance: 1.0,
            stop_speed: 0.5,
            slow_speed: 4.0,
            moderate_speed: 10.0,
            accel_delta: 2.0,
            straight_deg: 15.0,
            uturn_deg: 120.0,
        }
    }
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            period: DEFAULT_PERIOD,
            substep_dt: 0.1,
            lane_max_lateral: 3.5,
            lane_max_heading_deg: 45.0,
            close_radius: 10.0,
            close_window: 3.0,
            maneuver: ManeuverThresholds::default(),
        }
    }
}

impl RuleConfig {
    pub fn lane_max_heading(&self) -> f64 {
        self.lane_max_heading_deg.to_radians()
    }

    pub fn waypoint_count(&self) -> usize {
        (self.horizon / self.period).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.maneuver;
        let fields = [
            ("horizon", self.horizon),
            ("period", self.period),
            ("substep_dt", self.substep_dt),
            ("lane_max_lateral", self.lane_max_lateral),
            ("lane_max_heading_deg", self.lane_max_heading_deg),
            ("close_radius", self.close_radius),
            ("close_window", self.close_window),
            ("maneuver.stop_distance", m.stop_distance),
            ("maneuver.stop_speed", m.stop_speed),
            ("maneuver.slow_speed", m.slow_speed),
            ("maneuver.moderate_speed", m.moderate_speed),
            ("maneuver.accel_delta", m.accel_delta),
            ("maneuver.straight_deg", m.straight_deg),
            ("maneuver.uturn_deg", m.uturn_deg),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError(format!("{name} must be positive, got {v}")));
            }
        }
        if self.substep_dt > self.period {
            return Err(ConfigError("substep_dt must not exceed period".into()));
        }
        if !(m.stop_speed < m.slow_speed && m.slow_speed < m.moderate_speed) {
            return Err(ConfigError("speed class bounds must increase".into()));
        }
        if m.straight_deg >= m.uturn_deg {
            return Err(ConfigError("straight_deg must be below uturn_deg".into()));
        }
        Ok(())
    }
}
