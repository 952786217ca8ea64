//! Prompt assembly, trajectory text form and QA generation.

pub mod backend;
pub mod format;
pub mod prompt;
pub mod qa;

pub use backend::{BackendError, CachedBackend, HttpBackend, HttpSettings, LlmBackend, LlmRequest, Message};
pub use format::{find_trajectory, parse_trajectory, serialize_trajectory, FormatError};
pub use prompt::{render_prompt, PromptContext, SceneBundle};
pub use qa::{generate_qa, ConversationType, Provenance, QAItem, QaBackend, ReviewState, TEMPLATE_VERSION};

use crate::checklist::check_candidates;
use crate::config::RuleConfig;
use crate::maneuver::{instantiate_candidates, ManeuverLibrary, EXPERT_ID};
use crate::scene::{Scene, SceneError};

/// Expert trajectory, library candidates and all verdicts for one scene.
pub fn build_bundle(
    scene: &Scene,
    library: Option<&ManeuverLibrary>,
    limit: usize,
    speed_align: bool,
    config: &RuleConfig,
) -> Result<SceneBundle, SceneError> {
    let expert = scene.expert_trajectory(config.horizon, config.period)?;
    let expert_verdict = crate::checklist::run_checklist(scene, EXPERT_ID, &expert, config);
    let candidates = library
        .map(|lib| instantiate_candidates(scene, lib, limit, speed_align))
        .unwrap_or_default();
    let verdicts = check_candidates(scene, &candidates, config);
    Ok(SceneBundle::new(scene, expert, expert_verdict, candidates, verdicts, config))
}
