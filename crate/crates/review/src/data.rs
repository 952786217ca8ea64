//! Read-only review inputs: scenes, verdicts and QA items, plus the
//! ego-frame render payload the UI draws.

use cfdrive_core::artifacts::{self, SceneQa, SceneVerdicts, TrajectoryVerdict};
use cfdrive_core::checklist::{Category, Violation};
use cfdrive_core::promptqa::QAItem;
use cfdrive_core::{load_scene, LoadOptions, Scene, Vec2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("scene {path}: {message}")]
    Scene { path: String, message: String },
    #[error("{kind} file for scene {scene_id} has no matching scene file")]
    Orphan { kind: &'static str, scene_id: String },
    #[error("duplicate id {0}")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanePayload {
    pub id: String,
    pub points: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivablePayload {
    pub outer: Vec<Vec<Vec2>>,
    pub holes: Vec<Vec<Vec2>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPayload {
    pub id: String,
    pub category: String,
    pub length: f64,
    pub width: f64,
    pub position: Vec2,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryRole {
    Expert,
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPayload {
    pub id: String,
    pub role: TrajectoryRole,
    pub decision: String,
    /// Starts at the ego origin.
    pub points: Vec<Vec2>,
    pub safe: bool,
    pub categories: Vec<Category>,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoPayload {
    pub length: f64,
    pub width: f64,
}

/// Everything in the ego frame at the key timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePayload {
    pub scene_id: String,
    pub caption: Option<String>,
    pub ego: EgoPayload,
    pub lanes: Vec<LanePayload>,
    pub drivable: DrivablePayload,
    pub agents: Vec<AgentPayload>,
    pub trajectories: Vec<TrajectoryPayload>,
    /// The verdict categories a trajectory can carry, in display order.
    pub category_keys: Vec<Category>,
}

fn trajectory_payload(tv: &TrajectoryVerdict, role: TrajectoryRole) -> TrajectoryPayload {
    let mut points = vec![Vec2::ZERO];
    points.extend(tv.trajectory.positions());
    let decision = match role {
        TrajectoryRole::Expert => tv.verdict.decision.text(),
        TrajectoryRole::Candidate => tv.verdict.decision.maneuver_text(),
    };
    TrajectoryPayload {
        id: tv.id.clone(),
        role,
        decision,
        points,
        safe: tv.verdict.safe,
        categories: tv.verdict.categories().into_iter().collect(),
        violations: tv.verdict.violations.clone(),
    }
}

pub fn scene_payload(scene: &Scene, verdicts: Option<&SceneVerdicts>) -> ScenePayload {
    let view = scene.ego_view();
    let ring = |r: &cfdrive_core::Ring| r.vertices().to_vec();
    let mut trajectories = Vec::new();
    if let Some(v) = verdicts {
        trajectories.push(trajectory_payload(&v.expert, TrajectoryRole::Expert));
        trajectories.extend(v.candidates.iter().map(|c| trajectory_payload(c, TrajectoryRole::Candidate)));
    }
    ScenePayload {
        scene_id: scene.scene_id.clone(),
        caption: scene.caption.clone(),
        ego: EgoPayload {
            length: scene.ego_length,
            width: scene.ego_width,
        },
        lanes: view
            .lanes
            .iter()
            .map(|(id, pts)| LanePayload {
                id: id.clone(),
                points: pts.clone(),
            })
            .collect(),
        drivable: DrivablePayload {
            outer: view.drivable.outer.iter().map(ring).collect(),
            holes: view.drivable.holes.iter().map(ring).collect(),
        },
        agents: scene
            .agents
            .iter()
            .map(|a| {
                let p = view.agent_pose(a, 0.0);
                AgentPayload {
                    id: a.id.clone(),
                    category: a.category.clone(),
                    length: a.length,
                    width: a.width,
                    position: p.pos(),
                    yaw: p.yaw,
                }
            })
            .collect(),
        trajectories,
        category_keys: Category::ALL.to_vec(),
    }
}

/// One QA item and the scene it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemRef {
    pub scene_id: String,
    pub item: QAItem,
}

#[derive(Debug, Clone, Default)]
pub struct ReviewData {
    pub scenes: BTreeMap<String, ScenePayload>,
    /// Item ids in scene order, then generation order.
    pub order: Vec<String>,
    pub items: BTreeMap<String, ItemRef>,
}

impl ReviewData {
    /// Loads every scene under `scenes_dir` that has verdicts or QA items
    /// under `out_dir`.
    pub fn load(scenes_dir: &Path, out_dir: &Path) -> Result<Self, DataError> {
        let mut scenes = BTreeMap::new();
        for p in artifacts::json_files(scenes_dir)? {
            let s = load_scene(&p, LoadOptions::default()).map_err(|e| DataError::Scene {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            if scenes.insert(s.scene_id.clone(), s).is_some() {
                return Err(DataError::Duplicate(p.display().to_string()));
            }
        }
        let mut verdicts: BTreeMap<String, SceneVerdicts> = BTreeMap::new();
        let vdir = out_dir.join("verdicts");
        if vdir.is_dir() {
            for p in artifacts::json_files(&vdir)? {
                let v: SceneVerdicts = artifacts::read_json(&p)?;
                verdicts.insert(v.scene_id.clone(), v);
            }
        }
        let mut qa: BTreeMap<String, SceneQa> = BTreeMap::new();
        let qdir = out_dir.join("qa");
        if qdir.is_dir() {
            for p in artifacts::json_files(&qdir)? {
                let q: SceneQa = artifacts::read_json(&p)?;
                qa.insert(q.scene_id.clone(), q);
            }
        }
        let mut data = ReviewData::default();
        for id in verdicts.keys().chain(qa.keys()) {
            if data.scenes.contains_key(id) {
                continue;
            }
            let Some(scene) = scenes.get(id) else {
                let kind = if verdicts.contains_key(id) { "verdict" } else { "qa" };
                return Err(DataError::Orphan {
                    kind,
                    scene_id: id.clone(),
                });
            };
            data.scenes.insert(id.clone(), scene_payload(scene, verdicts.get(id)));
        }
        for (scene_id, q) in qa {
            for item in q.items {
                let id = item.id.clone();
                data.order.push(id.clone());
                let prev = data.items.insert(
                    id.clone(),
                    ItemRef {
                        scene_id: scene_id.clone(),
                        item,
                    },
                );
                if prev.is_some() {
                    return Err(DataError::Duplicate(id));
                }
            }
        }
        Ok(data)
    }

    pub fn items_of<'a>(&'a self, scene_id: &'a str) -> impl Iterator<Item = &'a ItemRef> + 'a {
        self.order
            .iter()
            .map(|id| &self.items[id])
            .filter(move |r| r.scene_id == scene_id)
    }
}
