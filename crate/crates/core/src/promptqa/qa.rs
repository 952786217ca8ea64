//! Question/answer generation over a scene bundle.
//!
//! Every conversation type has a fixed-phrase template. With an LLM backend
//! the template question is kept and the answer is requested from the
//! model; counterfactual answers must name exactly the verdict categories,
//! otherwise the request is retried and finally replaced by the template.

use super::backend::{BackendError, LlmBackend, LlmRequest, Message};
use super::format::serialize_trajectory;
use super::prompt::{render_prompt, SceneBundle};
use crate::checklist::{CounterfactualVerdict, ViolationKind};
use crate::metrics::keywords::extract_keywords;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

pub const TEMPLATE_VERSION: &str = "tpl-v1";
pub const TEMPLATE_BACKEND: &str = "template";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversationType {
    SceneDescription,
    Attention,
    Counterfactual,
    Planning,
    General,
}

impl ConversationType {
    pub const ALL: [ConversationType; 5] = [
        ConversationType::SceneDescription,
        ConversationType::Attention,
        ConversationType::Counterfactual,
        ConversationType::Planning,
        ConversationType::General,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConversationType::SceneDescription => "scene_description",
            ConversationType::Attention => "attention",
            ConversationType::Counterfactual => "counterfactual",
            ConversationType::Planning => "planning",
            ConversationType::General => "general",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for ConversationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "text", rename_all = "snake_case")]
pub enum ReviewState {
    Pending,
    Accepted,
    Rejected,
    Edited(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub scene_id: String,
    pub trajectory_ids: Vec<String>,
    pub backend: String,
    pub template_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub conversation_type: ConversationType,
    pub question: String,
    pub answer: String,
    pub provenance: Provenance,
    pub review_state: ReviewState,
    /// Backend failure that forced the template answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Where answers come from.
#[derive(Clone, Copy)]
pub enum QaBackend<'a> {
    Template,
    Llm { backend: &'a dyn LlmBackend, seed: u64, model: &'a str, attempts: u32 },
}

struct Draft {
    kind: ConversationType,
    question: String,
    answer: String,
    trajectory_ids: Vec<String>,
    verdict: Option<CounterfactualVerdict>,
}

fn violation_sentence(v: &crate::checklist::Violation, bundle: &SceneBundle) -> String {
    match &v.kind {
        ViolationKind::Collision { agent_id } => {
            let what = bundle
                .tree
                .objects()
                .find(|o| &o.agent_id == agent_id)
                .map(|o| o.category.clone())
                .unwrap_or_else(|| agent_id.clone());
            format!("It would lead to a collision with {what} after about {:.1} s.", v.time)
        }
        ViolationKind::RedLight { signal_id } => {
            format!("It would mean running a red light at signal {signal_id} after about {:.1} s.", v.time)
        }
        ViolationKind::OutOfDrivableArea => {
            format!("The vehicle would end up out of the drivable area after about {:.1} s.", v.time)
        }
    }
}

fn counterfactual_answer(v: &CounterfactualVerdict, traj: &str, bundle: &SceneBundle) -> String {
    if v.safe {
        return format!(
            "This maneuver is safe. The trajectory {traj} keeps a clear margin to the surrounding road users and stays on the road surface."
        );
    }
    let mut s = format!("This maneuver would be dangerous. Following {traj}:");
    let mut said = Vec::new();
    for viol in &v.violations {
        let line = violation_sentence(viol, bundle);
        if !said.contains(&line) {
            s.push(' ');
            s.push_str(&line);
            said.push(line);
        }
    }
    s
}

fn attention_answer(bundle: &SceneBundle) -> String {
    if bundle.tree.is_empty() {
        return "Nothing needs special attention: no object comes within 10 meters of the planned path in the next 3 seconds.".into();
    }
    let mut parts = Vec::new();
    for e in &bundle.tree.entries {
        for c in &e.children {
            parts.push(format!(
                "{} at {} on the {} lane",
                c.category,
                crate::attention::fmt_point1(c.position),
                e.shape.as_str()
            ));
        }
    }
    for o in &bundle.tree.orphans {
        parts.push(format!("{} at {}", o.category, crate::attention::fmt_point1(o.position)));
    }
    format!("You should pay attention to the following objects: {}.", parts.join("; "))
}

fn general_answer(bundle: &SceneBundle) -> String {
    if bundle.categories.is_empty() {
        return "There are no annotated objects around the ego vehicle.".into();
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &bundle.categories {
        *counts.entry(c).or_default() += 1;
    }
    let parts: Vec<String> = counts.iter().map(|(c, n)| format!("{n} {c}")).collect();
    format!(
        "There are {} annotated objects around the ego vehicle: {}.",
        bundle.categories.len(),
        parts.join(", ")
    )
}

fn drafts(bundle: &SceneBundle, kind: ConversationType) -> Vec<Draft> {
    let draft = |question: String, answer: String, ids: Vec<String>| Draft {
        kind,
        question,
        answer,
        trajectory_ids: ids,
        verdict: None,
    };
    match kind {
        ConversationType::SceneDescription => bundle
            .caption
            .iter()
            .filter(|c| !c.trim().is_empty())
            .map(|c| draft("Describe the scene around the ego vehicle.".into(), c.trim().to_string(), vec![]))
            .collect(),
        ConversationType::Attention => vec![draft(
            "What traffic elements should I be aware of while driving in this area?".into(),
            attention_answer(bundle),
            vec![crate::maneuver::EXPERT_ID.into()],
        )],
        ConversationType::Counterfactual => bundle
            .candidates
            .iter()
            .zip(&bundle.verdicts)
            .map(|(c, v)| {
                let traj = serialize_trajectory(&c.trajectory);
                Draft {
                    kind,
                    question: format!(
                        "If I decide to follow the trajectory {traj} ({}), what could be the consequences?",
                        v.decision.maneuver_text().to_lowercase()
                    ),
                    answer: counterfactual_answer(v, &traj, bundle),
                    trajectory_ids: vec![c.id.clone()],
                    verdict: Some(v.clone()),
                }
            })
            .collect(),
        ConversationType::Planning => {
            let traj = serialize_trajectory(&bundle.expert);
            let n = bundle.tree.objects().count();
            let watch = match n {
                0 => String::new(),
                1 => " while keeping an eye on the one nearby object".into(),
                n => format!(" while keeping an eye on the {n} nearby objects"),
            };
            vec![draft(
                "What should be my next action given the current driving situation, and why?".into(),
                format!(
                    "The most suitable trajectory to follow would be {traj}. It corresponds to {}{watch}.",
                    bundle.expert_verdict.decision.text().to_lowercase()
                ),
                vec![crate::maneuver::EXPERT_ID.into()],
            )]
        }
        ConversationType::General => vec![draft(
            "How many objects of each category are annotated around the ego vehicle?".into(),
            general_answer(bundle),
            vec![],
        )],
    }
}

fn system_prompt(kind: ConversationType) -> &'static str {
    match kind {
        ConversationType::SceneDescription => "Describe the driving scene relative to the ego vehicle.",
        ConversationType::Attention => "List the traffic elements the driver must watch, with their ego-frame positions.",
        ConversationType::Counterfactual => "Explain the consequences of the simulated trajectory. Name every rule it breaks (collision, running a red light, out of the drivable area), or say it is safe.",
        ConversationType::Planning => "Recommend the next action. Quote the expert trajectory exactly as given and explain why.",
        ConversationType::General => "Answer the question about the objects in the scene.",
    }
}

fn ask(
    backend: &dyn LlmBackend,
    model: &str,
    seed: u64,
    attempts: u32,
    prompt: &str,
    d: &Draft,
) -> Result<String, String> {
    let mut last = String::from("no attempt made");
    for attempt in 0..attempts.max(1) {
        let req = LlmRequest::new(
            model,
            vec![
                Message::new("system", system_prompt(d.kind)),
                Message::new("user", format!("{prompt}\nQuestion: {}", d.question)),
            ],
            seed.wrapping_add(attempt as u64),
        );
        match backend.complete(&req) {
            Ok(text) => {
                let text = text.trim().to_string();
                if let Some(v) = &d.verdict {
                    let got = extract_keywords(&text);
                    if got != v.categories() {
                        last = format!("answer mentions {got:?}, verdict is {:?}", v.categories());
                        continue;
                    }
                }
                if d.kind == ConversationType::Planning {
                    let traj = serialize_trajectory_from_question(d);
                    if !text.contains(&traj) {
                        last = "answer does not quote the expert trajectory".into();
                        continue;
                    }
                }
                return Ok(text);
            }
            Err(e @ (BackendError::MissingToken(_) | BackendError::Timeout)) => return Err(e.to_string()),
            Err(e) => last = e.to_string(),
        }
    }
    Err(last)
}

/// The serialized expert trajectory embedded in the planning draft answer.
fn serialize_trajectory_from_question(d: &Draft) -> String {
    super::format::find_trajectory(&d.answer)
        .map(|t| serialize_trajectory(&t))
        .unwrap_or_default()
}

/// Items for the enabled types, in type order then candidate order.
pub fn generate_qa(bundle: &SceneBundle, types: &[ConversationType], backend: QaBackend<'_>) -> Vec<QAItem> {
    let mut kinds: Vec<ConversationType> = types.to_vec();
    kinds.sort();
    kinds.dedup();
    let prompt = render_prompt(&bundle.context());
    let mut out = Vec::new();
    for kind in kinds {
        for (idx, d) in drafts(bundle, kind).into_iter().enumerate() {
            let (answer, backend_name, error) = match backend {
                QaBackend::Template => (d.answer.clone(), TEMPLATE_BACKEND.to_string(), None),
                QaBackend::Llm { backend, seed, model, attempts } => match ask(backend, model, seed, attempts, &prompt, &d) {
                    Ok(a) => (a, backend.name(), None),
                    Err(e) => (d.answer.clone(), TEMPLATE_BACKEND.to_string(), Some(e)),
                },
            };
            out.push(QAItem {
                id: format!("{}:{}:{idx}", bundle.scene_id, kind),
                conversation_type: kind,
                question: d.question,
                answer,
                provenance: Provenance {
                    scene_id: bundle.scene_id.clone(),
                    trajectory_ids: d.trajectory_ids,
                    backend: backend_name,
                    template_version: TEMPLATE_VERSION.into(),
                },
                review_state: ReviewState::Pending,
                error,
            });
        }
    }
    out
}
