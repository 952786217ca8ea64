//! Per-category precision and recall of verdict keywords.

use super::keywords::extract_keywords;
use crate::checklist::Category;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    /// `None` when nothing was predicted.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `None` when the ground truth has no positives.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    fn add(&mut self, o: &Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryPR {
    pub counts: Counts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl From<Counts> for CategoryPR {
    fn from(counts: Counts) -> Self {
        Self {
            precision: counts.precision(),
            recall: counts.recall(),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualPR {
    pub per_category: BTreeMap<Category, CategoryPR>,
    pub micro: CategoryPR,
    pub samples: usize,
}

impl CounterfactualPR {
    pub fn has_undefined(&self) -> bool {
        self.per_category
            .values()
            .chain([&self.micro])
            .any(|c| c.precision.is_none() || c.recall.is_none())
    }
}

/// Pairs are matched by position; extra entries on either side are ignored.
pub fn counterfactual_pr_sets(preds: &[BTreeSet<Category>], gts: &[BTreeSet<Category>]) -> CounterfactualPR {
    let mut per: BTreeMap<Category, Counts> = Category::ALL.iter().map(|&c| (c, Counts::default())).collect();
    for (p, g) in preds.iter().zip(gts) {
        for c in Category::ALL {
            let e = per.get_mut(&c).expect("all categories present");
            match (p.contains(&c), g.contains(&c)) {
                (true, true) => e.tp += 1,
                (true, false) => e.fp += 1,
                (false, true) => e.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let mut micro = Counts::default();
    for c in per.values() {
        micro.add(c);
    }
    CounterfactualPR {
        per_category: per.into_iter().map(|(k, v)| (k, v.into())).collect(),
        micro: micro.into(),
        samples: preds.len().min(gts.len()),
    }
}

pub fn counterfactual_pr(answers: &[String], gts: &[BTreeSet<Category>]) -> CounterfactualPR {
    let preds: Vec<_> = answers.iter().map(|a| extract_keywords(a)).collect();
    counterfactual_pr_sets(&preds, gts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_empty_predictions() {
        let gts = vec![BTreeSet::from([Category::Collision]); 3];
        let r = counterfactual_pr_sets(&vec![BTreeSet::new(); 3], &gts);
        let c = &r.per_category[&Category::Collision];
        assert_eq!(c.recall, Some(0.0));
        assert_eq!(c.precision, None);
        assert!(r.has_undefined());
    }
}
