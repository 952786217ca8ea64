//! Prompt context assembly and rendering.

use super::format::serialize_trajectory;
use crate::attention::{build_attention_tree, close_objects, AttentionTree};
use crate::checklist::CounterfactualVerdict;
use crate::config::RuleConfig;
use crate::maneuver::Candidate;
use crate::scene::Scene;
use crate::trajectory::Trajectory;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedBlock {
    pub trajectory_id: String,
    pub decision: String,
    pub trajectory: String,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertBlock {
    pub decision: String,
    pub trajectory: String,
    pub attention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub scene_id: String,
    pub caption: Option<String>,
    pub simulated: Vec<SimulatedBlock>,
    pub expert: ExpertBlock,
}

/// Everything derived from one scene that prompts and QA draw on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneBundle {
    pub scene_id: String,
    pub caption: Option<String>,
    pub expert: Trajectory,
    pub expert_verdict: CounterfactualVerdict,
    pub candidates: Vec<Candidate>,
    pub verdicts: Vec<CounterfactualVerdict>,
    pub tree: AttentionTree,
    /// Agent category per agent id, for counting questions.
    pub categories: Vec<String>,
}

impl SceneBundle {
    /// `verdicts` must line up with `candidates`.
    pub fn new(
        scene: &Scene,
        expert: Trajectory,
        expert_verdict: CounterfactualVerdict,
        candidates: Vec<Candidate>,
        verdicts: Vec<CounterfactualVerdict>,
        config: &RuleConfig,
    ) -> Self {
        let close = close_objects(scene, &expert, config);
        let tree = build_attention_tree(scene, &close, config);
        let mut categories: Vec<String> = scene.agents.iter().map(|a| a.category.clone()).collect();
        categories.sort();
        Self {
            scene_id: scene.scene_id.clone(),
            caption: scene.caption.clone(),
            expert,
            expert_verdict,
            candidates,
            verdicts,
            tree,
            categories,
        }
    }

    pub fn context(&self) -> PromptContext {
        PromptContext {
            scene_id: self.scene_id.clone(),
            caption: self.caption.clone(),
            simulated: self
                .candidates
                .iter()
                .zip(&self.verdicts)
                .map(|(c, v)| SimulatedBlock {
                    trajectory_id: c.id.clone(),
                    decision: v.decision.maneuver_text(),
                    trajectory: serialize_trajectory(&c.trajectory),
                    verdict: v.summary(),
                })
                .collect(),
            expert: ExpertBlock {
                decision: self.expert_verdict.decision.text(),
                trajectory: serialize_trajectory(&self.expert),
                attention: self.tree.render(),
            },
        }
    }
}

pub fn render_prompt(ctx: &PromptContext) -> String {
    let mut s = String::new();
    if let Some(c) = &ctx.caption {
        s.push_str("Caption:\n");
        s.push_str(c.trim_end());
        s.push_str("\n\n");
    }
    for b in &ctx.simulated {
        s.push_str(&format!("Simulated decision: {}\n", b.decision));
        s.push_str(&format!("Simulated trajectory: {}.\n", b.trajectory));
        s.push_str(&b.verdict);
        s.push_str("\n\n");
    }
    s.push_str(&format!("Expert decision: {}\n", ctx.expert.decision));
    s.push_str(&format!("Expert trajectory: {}.\n", ctx.expert.trajectory));
    s.push_str("Objects need attention:\n");
    if ctx.expert.attention.is_empty() {
        s.push_str("(none)\n");
    } else {
        s.push_str(&ctx.expert.attention);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> PromptContext {
        PromptContext {
            scene_id: "s".into(),
            caption: None,
            simulated: vec![],
            expert: ExpertBlock {
                decision: "Stop, Go Straight".into(),
                trajectory: "[PT, (+0.00, +0.00)]".into(),
                attention: String::new(),
            },
        }
    }

    #[test]
    fn expert_only() {
        let p = render_prompt(&ctx());
        assert!(!p.contains("Simulated"));
        assert_eq!(p, render_prompt(&ctx()));
        assert!(p.starts_with("Expert decision: Stop, Go Straight\nExpert trajectory: [PT, (+0.00, +0.00)].\n"));
    }
}
