//! Pipeline configuration file (TOML). Relative paths resolve against the
//! directory holding the file.

use anyhow::{bail, Context};
use cfdrive_core::keyframe::{DEFAULT_DYNAMICS_K, DEFAULT_SEMANTIC_FRACTION};
use cfdrive_core::maneuver::DEFAULT_LIBRARY_K;
use cfdrive_core::promptqa::{ConversationType, HttpSettings};
use cfdrive_core::RuleConfig;
use serde::{Deserialize, Serialize};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub rules: RuleConfig,
    pub selection: SelectionConfig,
    pub candidates: CandidateConfig,
    pub backend: BackendConfig,
    pub conversation_types: Vec<ConversationType>,
    pub review: ReviewConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub scenes: PathBuf,
    pub embeddings: Option<PathBuf>,
    /// Library read by `simulate`; `<out>/library.json` when unset.
    pub library: Option<PathBuf>,
    pub out: PathBuf,
    pub cache: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub semantic_fraction: f64,
    pub dynamics_k: usize,
    pub library_k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateConfig {
    pub limit: usize,
    /// Re-time library trajectories to the ego speed at the key frame.
    pub speed_align: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Template,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Answers asked per item before falling back to the template.
    pub attempts: u32,
    pub http: HttpSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewConfig {
    /// `<out>/reviews.jsonl` when unset.
    pub log: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    pub bind: SocketAddr,
    pub cors_origin: Option<String>,
    /// `<out>/reviewed.json` when unset.
    pub export: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            scenes: "scenes".into(),
            embeddings: None,
            library: None,
            out: "out".into(),
            cache: "cache".into(),
        }
    }
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            semantic_fraction: DEFAULT_SEMANTIC_FRACTION,
            dynamics_k: DEFAULT_DYNAMICS_K,
            library_k: DEFAULT_LIBRARY_K,
        }
    }
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self {
            limit: 8,
            speed_align: false,
        }
    }
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Template,
            attempts: 3,
            http: HttpSettings::default(),
        }
    }
}

impl Default for ReviewConfig {
    fn default() -> Self {
        Self {
            log: None,
            ui_dir: None,
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            cors_origin: None,
            export: None,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            rules: RuleConfig::default(),
            selection: SelectionConfig::default(),
            candidates: CandidateConfig::default(),
            backend: BackendConfig::default(),
            conversation_types: ConversationType::ALL.to_vec(),
            review: ReviewConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.scenes);
        fix(&mut self.paths.out);
        fix(&mut self.paths.cache);
        for p in [
            &mut self.paths.embeddings,
            &mut self.paths.library,
            &mut self.review.log,
            &mut self.review.ui_dir,
            &mut self.review.export,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.rules.validate()?;
        let f = self.selection.semantic_fraction;
        if !(f > 0.0 && f <= 1.0) {
            bail!("selection.semantic_fraction must lie in (0, 1], got {f}");
        }
        if self.selection.dynamics_k == 0 || self.selection.library_k == 0 {
            bail!("selection.dynamics_k and selection.library_k must be positive");
        }
        Ok(())
    }

    pub fn library_path(&self) -> PathBuf {
        self.paths.library.clone().unwrap_or_else(|| self.built_library_path())
    }

    /// Where `build-library` writes.
    pub fn built_library_path(&self) -> PathBuf {
        self.paths.out.join("library.json")
    }

    pub fn selection_path(&self) -> PathBuf {
        self.paths.out.join("selection.json")
    }

    pub fn qa_lines_path(&self) -> PathBuf {
        self.paths.out.join("qa.jsonl")
    }

    pub fn review_log(&self) -> PathBuf {
        self.review.log.clone().unwrap_or_else(|| self.paths.out.join("reviews.jsonl"))
    }

    pub fn review_export(&self) -> PathBuf {
        self.review.export.clone().unwrap_or_else(|| self.paths.out.join("reviewed.json"))
    }
}
