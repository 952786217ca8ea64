//! Review decisions and the per-item state folded from them.

use cfdrive_core::promptqa::ReviewState;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
    Edit(String),
}

impl Verdict {
    pub fn state(&self) -> ReviewState {
        match self {
            Verdict::Accept => ReviewState::Accepted,
            Verdict::Reject => ReviewState::Rejected,
            Verdict::Edit(t) => ReviewState::Edited(t.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewDecision {
    pub item_id: String,
    /// Must be the item's current revision plus one.
    pub revision: u64,
    pub verdict: Verdict,
    #[serde(default)]
    pub gap_tags: Vec<String>,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub reviewer: String,
    /// Unix seconds; filled in by the service when zero.
    #[serde(default)]
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FoldError {
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("item {item_id}: revision {got} does not follow current revision {current}")]
    Stale { item_id: String, current: u64, got: u64 },
}

/// Latest decision per item. The highest revision wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReviewBook {
    latest: BTreeMap<String, ReviewDecision>,
}

impl ReviewBook {
    pub fn revision(&self, item_id: &str) -> u64 {
        self.latest.get(item_id).map_or(0, |d| d.revision)
    }

    pub fn latest(&self, item_id: &str) -> Option<&ReviewDecision> {
        self.latest.get(item_id)
    }

    pub fn state(&self, item_id: &str) -> ReviewState {
        self.latest.get(item_id).map_or(ReviewState::Pending, |d| d.verdict.state())
    }

    /// Checks that `d` may be applied next, without applying it.
    pub fn check(&self, d: &ReviewDecision, known: impl Fn(&str) -> bool) -> Result<(), FoldError> {
        if !known(&d.item_id) {
            return Err(FoldError::UnknownItem(d.item_id.clone()));
        }
        let current = self.revision(&d.item_id);
        if d.revision != current + 1 {
            return Err(FoldError::Stale {
                item_id: d.item_id.clone(),
                current,
                got: d.revision,
            });
        }
        Ok(())
    }

    pub fn apply(&mut self, d: ReviewDecision, known: impl Fn(&str) -> bool) -> Result<(), FoldError> {
        self.check(&d, known)?;
        self.latest.insert(d.item_id.clone(), d);
        Ok(())
    }

    /// Pure fold over a log.
    pub fn replay(log: &[ReviewDecision], known: impl Fn(&str) -> bool) -> Result<Self, FoldError> {
        let mut book = Self::default();
        for d in log {
            book.apply(d.clone(), &known)?;
        }
        Ok(book)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub total: usize,
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub edited: usize,
    /// Gap tags on each item's latest decision.
    pub gap_tags: BTreeMap<String, usize>,
}

impl Stats {
    pub fn collect<'a>(book: &ReviewBook, items: impl Iterator<Item = &'a str>) -> Self {
        let mut s = Stats::default();
        for id in items {
            s.total += 1;
            match book.state(id) {
                ReviewState::Pending => s.pending += 1,
                ReviewState::Accepted => s.accepted += 1,
                ReviewState::Rejected => s.rejected += 1,
                ReviewState::Edited(_) => s.edited += 1,
            }
            if let Some(d) = book.latest(id) {
                for t in &d.gap_tags {
                    *s.gap_tags.entry(t.clone()).or_default() += 1;
                }
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(id: &str, rev: u64, v: Verdict) -> ReviewDecision {
        ReviewDecision {
            item_id: id.into(),
            revision: rev,
            verdict: v,
            gap_tags: vec!["missed cone".into()],
            note: String::new(),
            reviewer: String::new(),
            timestamp: 0,
        }
    }

    #[test]
    fn revisions_must_follow() {
        let any = |_: &str| true;
        let mut b = ReviewBook::default();
        b.apply(dec("x", 1, Verdict::Accept), any).unwrap();
        assert_eq!(
            b.apply(dec("x", 1, Verdict::Reject), any),
            Err(FoldError::Stale { item_id: "x".into(), current: 1, got: 1 })
        );
        assert!(b.apply(dec("x", 3, Verdict::Reject), any).is_err());
        b.apply(dec("x", 2, Verdict::Edit("new".into())), any).unwrap();
        assert_eq!(b.state("x"), ReviewState::Edited("new".into()));
        assert_eq!(b.apply(dec("y", 1, Verdict::Accept), |id| id == "x"), Err(FoldError::UnknownItem("y".into())));
    }

    #[test]
    fn stats_count_latest_only() {
        let log = vec![dec("a", 1, Verdict::Reject), dec("a", 2, Verdict::Accept), dec("b", 1, Verdict::Edit("t".into()))];
        let b = ReviewBook::replay(&log, |_| true).unwrap();
        let s = Stats::collect(&b, ["a", "b", "c"].into_iter());
        assert_eq!((s.total, s.pending, s.accepted, s.rejected, s.edited), (3, 1, 1, 0, 1));
        assert_eq!(s.gap_tags["missed cone"], 2);
    }

    #[test]
    fn verdict_wire_form() {
        assert_eq!(serde_json::to_string(&Verdict::Accept).unwrap(), r#"{"kind":"accept"}"#);
        assert_eq!(serde_json::to_string(&Verdict::Edit("a".into())).unwrap(), r#"{"kind":"edit","text":"a"}"#);
    }
}
