//! On-disk stage outputs shared by the CLI and the review service.
//!
//! Layout under an output directory:
//!
//! ```text
//! selection.json            key-frame selection
//! library.json              maneuver library
//! candidates/<scene>.json   library candidates placed in the scene
//! verdicts/<scene>.json     expert + candidate verdicts
//! attention/<scene>.json    close objects and attention tree
//! attention/<scene>.txt     rendered attention tree
//! prompts/<scene>.txt       rendered prompt
//! qa/<scene>.json           generated QA items
//! qa.jsonl                  all QA items, one per line, by scene id
//! ```

use crate::attention::{AttentionTree, CloseObject};
use crate::checklist::CounterfactualVerdict;
use crate::maneuver::Candidate;
use crate::promptqa::QAItem;
use crate::trajectory::Trajectory;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryVerdict {
    pub id: String,
    pub trajectory: Trajectory,
    pub verdict: CounterfactualVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneVerdicts {
    pub scene_id: String,
    pub expert: TrajectoryVerdict,
    pub candidates: Vec<TrajectoryVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneCandidates {
    pub scene_id: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAttention {
    pub scene_id: String,
    pub close: Vec<CloseObject>,
    pub tree: AttentionTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneQa {
    pub scene_id: String,
    pub items: Vec<QAItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub semantic: Vec<String>,
    pub dynamics: Vec<String>,
    /// Sorted union of both passes.
    pub selected: Vec<String>,
}

pub fn candidates_path(out: &Path, scene_id: &str) -> PathBuf {
    out.join("candidates").join(format!("{scene_id}.json"))
}

pub fn verdicts_path(out: &Path, scene_id: &str) -> PathBuf {
    out.join("verdicts").join(format!("{scene_id}.json"))
}

pub fn attention_path(out: &Path, scene_id: &str) -> PathBuf {
    out.join("attention").join(format!("{scene_id}.json"))
}

pub fn attention_text_path(out: &Path, scene_id: &str) -> PathBuf {
    out.join("attention").join(format!("{scene_id}.txt"))
}

pub fn prompt_path(out: &Path, scene_id: &str) -> PathBuf {
    out.join("prompts").join(format!("{scene_id}.txt"))
}

pub fn qa_path(out: &Path, scene_id: &str) -> PathBuf {
    out.join("qa").join(format!("{scene_id}.json"))
}

/// Writes `bytes` to a sibling temp file, syncs it and renames it over
/// `path`, creating parent directories.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> io::Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
}

/// `*.json` files directly under `dir`, sorted by name.
pub fn json_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "json") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
