//! Reviewed-dataset export: accepted and edited items, edits applied.

use crate::data::ReviewData;
use crate::decision::{ReviewBook, Stats};
use cfdrive_core::artifacts::write_json;
use cfdrive_core::promptqa::{QAItem, ReviewState};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub exported: usize,
    pub stats: Stats,
    pub gap_tags_path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Gap-tag file written next to the export: `<stem>.gaps.json`.
pub fn gap_tags_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("export");
    path.with_file_name(format!("{stem}.gaps.json"))
}

/// Writes the accepted and edited items, in scene then generation order,
/// and the gap-tag histogram of all latest decisions.
pub fn export_reviewed(data: &ReviewData, book: &ReviewBook, path: &Path) -> std::io::Result<ExportSummary> {
    let mut items: Vec<QAItem> = Vec::new();
    for id in &data.order {
        let mut item = data.items[id].item.clone();
        match book.state(id) {
            ReviewState::Accepted => {}
            ReviewState::Edited(text) => item.answer = text,
            ReviewState::Pending | ReviewState::Rejected => continue,
        }
        item.review_state = book.state(id);
        items.push(item);
    }
    let stats = Stats::collect(book, data.order.iter().map(String::as_str));
    write_json(path, &items)?;
    let gaps = gap_tags_path(path);
    write_json(&gaps, &stats.gap_tags)?;
    let warning = items.is_empty().then(|| {
        let w = format!("nothing to export: {} pending, {} rejected", stats.pending, stats.rejected);
        tracing::warn!("{w}");
        w
    });
    Ok(ExportSummary {
        exported: items.len(),
        stats,
        gap_tags_path: gaps,
        warning,
    })
}
