//! Counterfactual driving-scene engine.
//!
//! Candidate ego trajectories are simulated against annotated planar scenes,
//! checked against a rule checklist (collision, drivable area, red light),
//! summarised into lane-rooted attention trees and rendered into prompts and
//! question/answer pairs. The [`metrics`] module scores planner and QA
//! outputs against the same engine.

pub mod artifacts;
pub mod attention;
pub mod checklist;
pub mod config;
pub mod geometry;
pub mod keyframe;
pub mod maneuver;
pub mod metrics;
pub mod promptqa;
pub mod scene;
pub mod trajectory;

pub use checklist::{run_checklist, Category, CounterfactualVerdict, Violation, ViolationKind};
pub use config::RuleConfig;
pub use geometry::{OrientedBox, Polygon, Ring, Vec2};
pub use maneuver::{HighLevelDecision, ManeuverLibrary};
pub use scene::{load_scene, LoadOptions, Pose2, Scene, SceneError};
pub use trajectory::{Trajectory, Waypoint};
