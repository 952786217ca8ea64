//! Evaluation: open-loop planning metrics, verdict keyword precision and
//! recall, CIDEr and the weighted composite score.

pub mod cider;
pub mod keywords;
pub mod openloop;
pub mod pr;

pub use cider::{cider, CiderReport};
pub use keywords::{extract_keywords, render_categories};
pub use openloop::{collision_rate, intersection_rate, l2_at_horizons, open_loop_report, AtHorizons, OpenLoopReport};
pub use pr::{counterfactual_pr, counterfactual_pr_sets, CounterfactualPR};

/// Weights: GPT score 0.4, language, match and accuracy 0.2 each.
pub fn composite_score(gpt: f64, language: f64, matching: f64, accuracy: f64) -> f64 {
    0.4 * gpt + 0.2 * (language + matching + accuracy)
}
