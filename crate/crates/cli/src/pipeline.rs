//! Stage implementations. Each stage reads the scenes plus earlier stage
//! files and writes its own files under the output directory.

use crate::config::{BackendKind, PipelineConfig};
use anyhow::{anyhow, bail, Context};
use cfdrive_core::artifacts::{
    self, SceneAttention, SceneCandidates, SceneQa, SceneVerdicts, Selection, TrajectoryVerdict,
};
use cfdrive_core::attention::{build_attention_tree, close_objects};
use cfdrive_core::checklist::{check_candidates, run_checklist};
use cfdrive_core::keyframe::{read_embeddings, select_dynamics, select_semantic};
use cfdrive_core::maneuver::{cluster_trajectories, instantiate_candidates, Candidate, ManeuverLibrary, EXPERT_ID};
use cfdrive_core::promptqa::{
    generate_qa, render_prompt, CachedBackend, HttpBackend, LlmBackend, QAItem, QaBackend, SceneBundle,
};
use cfdrive_core::{load_scene, LoadOptions, Scene, Trajectory};
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Scene files that failed to load; reported per file, exit status 1.
#[derive(Debug)]
pub struct ValidationFailed {
    pub failed: usize,
    pub total: usize,
}

impl std::fmt::Display for ValidationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} of {} scene files failed validation", self.failed, self.total)
    }
}

impl std::error::Error for ValidationFailed {}

pub struct FileReport {
    pub path: PathBuf,
    pub result: Result<String, String>,
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, jobs: usize) -> anyhow::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
        Ok(Self { cfg, pool })
    }

    fn out(&self) -> &Path {
        &self.cfg.paths.out
    }

    /// Loads every scene file under `path` (or the single file `path`),
    /// returning one report line per file.
    pub fn check_files(&self, path: &Path) -> anyhow::Result<(Vec<FileReport>, Vec<Scene>)> {
        let files = if path.is_dir() {
            artifacts::json_files(path).with_context(|| format!("listing {}", path.display()))?
        } else if path.is_file() {
            vec![path.to_path_buf()]
        } else {
            bail!("no scene files at {}", path.display());
        };
        let loaded: Vec<(PathBuf, Result<Scene, String>)> = self.pool.install(|| {
            files
                .par_iter()
                .map(|p| (p.clone(), load_scene(p, LoadOptions::default()).map_err(|e| e.to_string())))
                .collect()
        });
        let mut reports = Vec::new();
        let mut scenes: Vec<Scene> = Vec::new();
        let mut seen = BTreeSet::new();
        for (path, r) in loaded {
            let result = match r {
                Ok(s) if !seen.insert(s.scene_id.clone()) => Err(format!("duplicate scene id {}", s.scene_id)),
                Ok(s) => {
                    let id = s.scene_id.clone();
                    scenes.push(s);
                    Ok(id)
                }
                Err(e) => Err(e),
            };
            reports.push(FileReport { path, result });
        }
        scenes.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
        Ok((reports, scenes))
    }

    /// All scenes, or the per-file report on stderr and an error.
    pub fn scenes(&self) -> anyhow::Result<Vec<Scene>> {
        let (reports, scenes) = self.check_files(&self.cfg.paths.scenes)?;
        let failed: Vec<&FileReport> = reports.iter().filter(|r| r.result.is_err()).collect();
        if !failed.is_empty() {
            for r in &failed {
                if let Err(e) = &r.result {
                    eprintln!("FAIL {}: {e}", r.path.display());
                }
            }
            return Err(ValidationFailed {
                failed: failed.len(),
                total: reports.len(),
            }
            .into());
        }
        if scenes.is_empty() {
            bail!("no scenes under {}", self.cfg.paths.scenes.display());
        }
        Ok(scenes)
    }

    /// Runs `f` over scenes on the job pool, logging one line per scene.
    /// Results keep scene order.
    fn per_scene<T: Send>(
        &self,
        stage: &str,
        scenes: &[Scene],
        f: impl Fn(&Scene) -> anyhow::Result<(T, String)> + Sync,
    ) -> anyhow::Result<Vec<T>> {
        self.pool.install(|| {
            scenes
                .par_iter()
                .map(|s| {
                    let t0 = Instant::now();
                    let (v, detail) = f(s).with_context(|| format!("{stage}: scene {}", s.scene_id))?;
                    let ms = t0.elapsed().as_secs_f64() * 1e3;
                    tracing::info!(stage, scene = %s.scene_id, ms = format!("{ms:.1}"), "{detail}");
                    Ok(v)
                })
                .collect()
        })
    }

    fn expert(&self, scene: &Scene) -> anyhow::Result<Trajectory> {
        Ok(scene.expert_trajectory(self.cfg.rules.horizon, self.cfg.rules.period)?)
    }

    fn experts(&self, scenes: &[Scene]) -> Vec<(String, Trajectory)> {
        scenes
            .iter()
            .filter_map(|s| match self.expert(s) {
                Ok(t) => Some((s.scene_id.clone(), t)),
                Err(e) => {
                    tracing::warn!(scene = %s.scene_id, "no expert trajectory: {e}");
                    None
                }
            })
            .collect()
    }

    pub fn keyframes(&self) -> anyhow::Result<Selection> {
        let scenes = self.scenes()?;
        let seed = self.cfg.seed;
        let trajs = self.experts(&scenes);
        if trajs.is_empty() {
            bail!("no scene has a full expert trajectory");
        }
        let k = self.cfg.selection.dynamics_k.min(trajs.len());
        let dynamics = select_dynamics(&trajs, k, seed)?;
        let semantic = match &self.cfg.paths.embeddings {
            Some(p) => {
                let records = read_embeddings(p).with_context(|| format!("embeddings {}", p.display()))?;
                select_semantic(&records, self.cfg.selection.semantic_fraction, seed)?
            }
            None => Vec::new(),
        };
        let selected: BTreeSet<&String> = semantic.iter().chain(&dynamics).collect();
        let sel = Selection {
            selected: selected.into_iter().cloned().collect(),
            semantic,
            dynamics,
        };
        artifacts::write_json(&self.cfg.selection_path(), &sel)?;
        tracing::info!(
            stage = "keyframes",
            semantic = sel.semantic.len(),
            dynamics = sel.dynamics.len(),
            selected = sel.selected.len(),
            "selection written"
        );
        Ok(sel)
    }

    /// Clusters expert trajectories of the selected scenes (all scenes
    /// without a selection file).
    pub fn build_library(&self) -> anyhow::Result<ManeuverLibrary> {
        let scenes = self.scenes()?;
        let sel_path = self.cfg.selection_path();
        let keep: Option<BTreeSet<String>> = if sel_path.exists() {
            let sel: Selection = artifacts::read_json(&sel_path)?;
            Some(sel.selected.into_iter().collect())
        } else {
            None
        };
        let trajs: Vec<Trajectory> = self
            .experts(&scenes)
            .into_iter()
            .filter(|(id, _)| keep.as_ref().is_none_or(|k| k.contains(id)))
            .map(|(_, t)| t)
            .collect();
        if trajs.is_empty() {
            bail!("no expert trajectories to cluster");
        }
        let k = self.cfg.selection.library_k.min(trajs.len());
        let lib = cluster_trajectories(&trajs, k, self.cfg.seed, &self.cfg.rules)?;
        let path = self.cfg.built_library_path();
        artifacts::write_atomic(&path, format!("{}\n", lib.to_json()).as_bytes())?;
        tracing::info!(stage = "build-library", trajectories = trajs.len(), entries = lib.entries.len(), path = %path.display(), "library written");
        Ok(lib)
    }

    fn library(&self) -> anyhow::Result<Option<ManeuverLibrary>> {
        let p = self.cfg.library_path();
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(ManeuverLibrary::load(&p).with_context(|| format!("library {}", p.display()))?))
    }

    fn require_library(&self) -> anyhow::Result<ManeuverLibrary> {
        self.library()?.ok_or_else(|| {
            anyhow!(
                "no maneuver library at {}; run build-library or set paths.library",
                self.cfg.library_path().display()
            )
        })
    }

    pub fn simulate(&self) -> anyhow::Result<()> {
        let scenes = self.scenes()?;
        let lib = self.require_library()?;
        let c = &self.cfg.candidates;
        self.per_scene("simulate", &scenes, |s| {
            let candidates = instantiate_candidates(s, &lib, c.limit, c.speed_align);
            let n = candidates.len();
            artifacts::write_json(
                &artifacts::candidates_path(self.out(), &s.scene_id),
                &SceneCandidates {
                    scene_id: s.scene_id.clone(),
                    candidates,
                },
            )?;
            Ok(((), format!("{n} candidates")))
        })?;
        Ok(())
    }

    /// Candidates from the `simulate` file, else instantiated from the
    /// library, else none.
    fn candidates(&self, scene: &Scene, lib: Option<&ManeuverLibrary>) -> anyhow::Result<Vec<Candidate>> {
        let p = artifacts::candidates_path(self.out(), &scene.scene_id);
        if p.exists() {
            let c: SceneCandidates = artifacts::read_json(&p)?;
            if c.scene_id != scene.scene_id {
                bail!("{} belongs to scene {}", p.display(), c.scene_id);
            }
            return Ok(c.candidates);
        }
        let c = &self.cfg.candidates;
        Ok(lib
            .map(|l| instantiate_candidates(scene, l, c.limit, c.speed_align))
            .unwrap_or_default())
    }

    fn verdicts(&self, scene: &Scene, lib: Option<&ManeuverLibrary>) -> anyhow::Result<SceneVerdicts> {
        let cfg = &self.cfg.rules;
        let expert = self.expert(scene)?;
        let expert_verdict = run_checklist(scene, EXPERT_ID, &expert, cfg);
        let candidates = self.candidates(scene, lib)?;
        let verdicts = check_candidates(scene, &candidates, cfg);
        Ok(SceneVerdicts {
            scene_id: scene.scene_id.clone(),
            expert: TrajectoryVerdict {
                id: EXPERT_ID.into(),
                trajectory: expert,
                verdict: expert_verdict,
            },
            candidates: candidates
                .into_iter()
                .zip(verdicts)
                .map(|(c, verdict)| TrajectoryVerdict {
                    id: c.id,
                    trajectory: c.trajectory,
                    verdict,
                })
                .collect(),
        })
    }

    pub fn check(&self) -> anyhow::Result<Vec<SceneVerdicts>> {
        let scenes = self.scenes()?;
        let lib = self.library()?;
        self.per_scene("check", &scenes, |s| {
            let v = self.verdicts(s, lib.as_ref())?;
            artifacts::write_json(&artifacts::verdicts_path(self.out(), &s.scene_id), &v)?;
            let unsafe_n = v.candidates.iter().filter(|c| !c.verdict.safe).count();
            let detail = format!(
                "expert {}, {} of {} candidates unsafe",
                if v.expert.verdict.safe { "safe" } else { "unsafe" },
                unsafe_n,
                v.candidates.len()
            );
            Ok((v, detail))
        })
    }

    pub fn attention(&self) -> anyhow::Result<Vec<SceneAttention>> {
        let scenes = self.scenes()?;
        let cfg = &self.cfg.rules;
        self.per_scene("attention", &scenes, |s| {
            let expert = self.expert(s)?;
            let close = close_objects(s, &expert, cfg);
            let tree = build_attention_tree(s, &close, cfg);
            artifacts::write_atomic(&artifacts::attention_text_path(self.out(), &s.scene_id), tree.render().as_bytes())?;
            let a = SceneAttention {
                scene_id: s.scene_id.clone(),
                close,
                tree,
            };
            artifacts::write_json(&artifacts::attention_path(self.out(), &s.scene_id), &a)?;
            let detail = format!("{} close objects", a.close.len());
            Ok((a, detail))
        })
    }

    /// Bundle from the `check` file when present, else computed.
    fn bundle(&self, scene: &Scene, lib: Option<&ManeuverLibrary>) -> anyhow::Result<SceneBundle> {
        let p = artifacts::verdicts_path(self.out(), &scene.scene_id);
        let v: SceneVerdicts = if p.exists() {
            let v: SceneVerdicts = artifacts::read_json(&p)?;
            if v.scene_id != scene.scene_id {
                bail!("{} belongs to scene {}", p.display(), v.scene_id);
            }
            v
        } else {
            self.verdicts(scene, lib)?
        };
        let (candidates, verdicts) = v
            .candidates
            .into_iter()
            .map(|c| {
                (
                    Candidate {
                        id: c.id,
                        trajectory: c.trajectory,
                    },
                    c.verdict,
                )
            })
            .unzip();
        Ok(SceneBundle::new(
            scene,
            v.expert.trajectory,
            v.expert.verdict,
            candidates,
            verdicts,
            &self.cfg.rules,
        ))
    }

    pub fn prompts(&self) -> anyhow::Result<()> {
        let scenes = self.scenes()?;
        let lib = self.library()?;
        self.per_scene("prompts", &scenes, |s| {
            let b = self.bundle(s, lib.as_ref())?;
            let text = render_prompt(&b.context());
            artifacts::write_atomic(&artifacts::prompt_path(self.out(), &s.scene_id), text.as_bytes())?;
            Ok(((), format!("{} simulated blocks", b.candidates.len())))
        })?;
        Ok(())
    }

    pub fn generate(&self) -> anyhow::Result<Vec<QAItem>> {
        let scenes = self.scenes()?;
        let lib = self.library()?;
        let b = &self.cfg.backend;
        let llm: Option<Box<dyn LlmBackend>> = match b.kind {
            BackendKind::Template => None,
            BackendKind::Http => Some(Box::new(CachedBackend::new(
                HttpBackend::new(b.http.clone())?,
                &self.cfg.paths.cache,
            )?)),
        };
        let backend = match &llm {
            None => QaBackend::Template,
            Some(l) => QaBackend::Llm {
                backend: l.as_ref(),
                seed: self.cfg.seed,
                model: &b.http.model,
                attempts: b.attempts,
            },
        };
        let types = &self.cfg.conversation_types;
        let per = self.per_scene("generate", &scenes, |s| {
            let bundle = self.bundle(s, lib.as_ref())?;
            let items = generate_qa(&bundle, types, backend);
            for it in items.iter().filter(|i| i.error.is_some()) {
                tracing::warn!(item = %it.id, error = it.error.as_deref().unwrap_or(""), "backend answer replaced by template");
            }
            let fallbacks = items.iter().filter(|i| i.error.is_some()).count();
            let qa = SceneQa {
                scene_id: s.scene_id.clone(),
                items,
            };
            artifacts::write_json(&artifacts::qa_path(self.out(), &s.scene_id), &qa)?;
            let detail = format!("{} items, {fallbacks} fallbacks", qa.items.len());
            Ok((qa.items, detail))
        })?;
        let items: Vec<QAItem> = per.into_iter().flatten().collect();
        let mut lines = String::new();
        for it in &items {
            lines.push_str(&serde_json::to_string(it)?);
            lines.push('\n');
        }
        artifacts::write_atomic(&self.cfg.qa_lines_path(), lines.as_bytes())?;
        Ok(items)
    }
}
