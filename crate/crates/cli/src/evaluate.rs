//! `evaluate`: open-loop metrics for predicted trajectories and keyword
//! precision/recall plus CIDEr for predicted answers.

use crate::pipeline::Pipeline;
use anyhow::{bail, Context};
use cfdrive_core::artifacts::{self, SceneQa, SceneVerdicts};
use cfdrive_core::checklist::Category;
use cfdrive_core::metrics::{
    cider, collision_rate, counterfactual_pr, intersection_rate, open_loop_report, AtHorizons, CiderReport,
    CounterfactualPR, OpenLoopReport,
};
use cfdrive_core::promptqa::{parse_trajectory, ConversationType, QAItem};
use cfdrive_core::{Scene, Trajectory};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::path::Path;

/// Prediction file: trajectories per scene id and answers per QA item id.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predictions {
    #[serde(default)]
    pub trajectories: BTreeMap<String, PredTrajectory>,
    #[serde(default)]
    pub answers: BTreeMap<String, String>,
}

/// Either the bracketed text form or a full trajectory object.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum PredTrajectory {
    Text(String),
    Full(Trajectory),
}

impl PredTrajectory {
    fn trajectory(&self) -> anyhow::Result<Trajectory> {
        match self {
            PredTrajectory::Text(s) => Ok(parse_trajectory(s)?),
            PredTrajectory::Full(t) => {
                t.validate()?;
                Ok(t.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRates {
    pub collision: AtHorizons,
    pub intersection: AtHorizons,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub open_loop: Option<OpenLoopReport>,
    /// Rates of the logged expert trajectories on the same scenes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthRates>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterfactual: Option<CounterfactualPR>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cider: Option<CiderReport>,
    /// Aggregates that are NaN or 0/0.
    pub undefined: Vec<String>,
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "undef".to_string(), |v| format!("{:.1}", v * 100.0))
}

impl EvalReport {
    pub fn text(&self) -> String {
        let mut s = String::new();
        if let Some(o) = &self.open_loop {
            s.push_str(&o.table());
        }
        if let Some(g) = &self.ground_truth {
            let _ = writeln!(
                s,
                "ground truth: collision avg {:.2} %, intersection avg {:.2} %",
                g.collision.avg, g.intersection.avg
            );
        }
        if let Some(pr) = &self.counterfactual {
            let _ = writeln!(s, "{:<14} {:>5} {:>5} {:>5} {:>9} {:>9}", "category", "tp", "fp", "fn", "P (%)", "R (%)");
            let rows = pr.per_category.iter().map(|(c, v)| (c.to_string(), v)).chain([("micro".to_string(), &pr.micro)]);
            for (name, v) in rows {
                let _ = writeln!(
                    s,
                    "{:<14} {:>5} {:>5} {:>5} {:>9} {:>9}",
                    name,
                    v.counts.tp,
                    v.counts.fp,
                    v.counts.fn_,
                    pct(v.precision),
                    pct(v.recall)
                );
            }
        }
        if let Some(c) = &self.cider {
            let _ = writeln!(s, "CIDEr mean {:.4} over {} answers", c.mean, c.scores.len());
        }
        for u in &self.undefined {
            let _ = writeln!(s, "undefined: {u}");
        }
        s
    }
}

pub fn read_predictions(path: &Path) -> anyhow::Result<Predictions> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let p: Predictions = serde_json::from_str(&text).with_context(|| format!("prediction file {}", path.display()))?;
    if p.trajectories.is_empty() && p.answers.is_empty() {
        bail!("prediction file {} has neither trajectories nor answers", path.display());
    }
    Ok(p)
}

fn open_loop(
    scenes: &[Scene],
    preds: &BTreeMap<String, PredTrajectory>,
    pipe: &Pipeline,
) -> anyhow::Result<(OpenLoopReport, GroundTruthRates)> {
    let cfg = &pipe.cfg.rules;
    let by_id: BTreeMap<&str, &Scene> = scenes.iter().map(|s| (s.scene_id.as_str(), s)).collect();
    let mut rows = Vec::new();
    for (id, p) in preds {
        let scene = *by_id.get(id.as_str()).with_context(|| format!("prediction for unknown scene {id}"))?;
        let pred = p.trajectory().with_context(|| format!("trajectory for scene {id}"))?;
        let gt = scene.expert_trajectory(cfg.horizon, cfg.period)?;
        rows.push((scene, pred, gt));
    }
    let samples: Vec<(&Scene, &Trajectory, &Trajectory)> = rows.iter().map(|(s, p, g)| (*s, p, g)).collect();
    let report = open_loop_report(&samples, cfg)?;
    let gts: Vec<(&Scene, &Trajectory)> = rows.iter().map(|(s, _, g)| (*s, g)).collect();
    let gt = GroundTruthRates {
        collision: collision_rate(&gts, cfg),
        intersection: intersection_rate(&gts, cfg),
    };
    Ok((report, gt))
}

/// Generated QA items and the verdict categories behind each
/// counterfactual item.
fn qa_ground_truth(pipe: &Pipeline) -> anyhow::Result<(BTreeMap<String, QAItem>, BTreeMap<String, BTreeSet<Category>>)> {
    let out = &pipe.cfg.paths.out;
    let dir = out.join("qa");
    if !dir.is_dir() {
        bail!("no generated QA under {}; run generate first", dir.display());
    }
    let mut items = BTreeMap::new();
    let mut cats = BTreeMap::new();
    for p in artifacts::json_files(&dir)? {
        let qa: SceneQa = artifacts::read_json(&p)?;
        let vpath = artifacts::verdicts_path(out, &qa.scene_id);
        let verdicts: Option<SceneVerdicts> = vpath.exists().then(|| artifacts::read_json(&vpath)).transpose()?;
        for it in qa.items {
            if it.conversation_type == ConversationType::Counterfactual {
                let v = verdicts
                    .as_ref()
                    .with_context(|| format!("no verdicts at {} for {}", vpath.display(), it.id))?;
                let tid = it.provenance.trajectory_ids.first().map(String::as_str).unwrap_or("");
                let tv = v
                    .candidates
                    .iter()
                    .chain([&v.expert])
                    .find(|c| c.id == tid)
                    .with_context(|| format!("item {} refers to unknown trajectory {tid:?}", it.id))?;
                cats.insert(it.id.clone(), tv.verdict.categories());
            }
            items.insert(it.id.clone(), it);
        }
    }
    Ok((items, cats))
}

pub fn evaluate(pipe: &Pipeline, preds: &Predictions) -> anyhow::Result<EvalReport> {
    let mut report = EvalReport {
        open_loop: None,
        ground_truth: None,
        counterfactual: None,
        cider: None,
        undefined: Vec::new(),
    };
    if !preds.trajectories.is_empty() {
        let scenes = pipe.scenes()?;
        let (o, g) = open_loop(&scenes, &preds.trajectories, pipe)?;
        if o.has_undefined() {
            report.undefined.push("open-loop aggregates".into());
        }
        report.open_loop = Some(o);
        report.ground_truth = Some(g);
    }
    if !preds.answers.is_empty() {
        let (items, cats) = qa_ground_truth(pipe)?;
        if let Some(id) = preds.answers.keys().find(|id| !items.contains_key(*id)) {
            bail!("answer for unknown QA item {id}");
        }
        let (answers, gts): (Vec<String>, Vec<BTreeSet<Category>>) = preds
            .answers
            .iter()
            .filter_map(|(id, a)| cats.get(id).map(|c| (a.clone(), c.clone())))
            .unzip();
        if !answers.is_empty() {
            let pr = counterfactual_pr(&answers, &gts);
            for (c, v) in &pr.per_category {
                if v.precision.is_none() || v.recall.is_none() {
                    tracing::info!(category = %c, "precision or recall undefined for category");
                }
            }
            if pr.micro.precision.is_none() || pr.micro.recall.is_none() {
                report.undefined.push("counterfactual micro precision/recall".into());
            }
            report.counterfactual = Some(pr);
        }
        let references: BTreeMap<String, Vec<String>> = preds
            .answers
            .keys()
            .map(|id| (id.clone(), vec![items[id].answer.clone()]))
            .collect();
        let c = cider(&preds.answers, &references);
        if !c.mean.is_finite() {
            report.undefined.push("CIDEr mean".into());
        }
        report.cider = Some(c);
    }
    Ok(report)
}
