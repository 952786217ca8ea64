//! Append-only review log, one JSON decision per line.

use crate::decision::ReviewDecision;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("review log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("review log {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

pub struct ReviewLog {
    path: PathBuf,
    file: File,
}

impl ReviewLog {
    /// Opens (creating) the log and returns every complete decision in it.
    /// A torn final line, left by a crash mid-write and never acknowledged,
    /// is cut off.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<ReviewDecision>), LogError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| LogError::Io { path: path.clone(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err)?;
        let mut decisions = Vec::new();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut n = 0;
        loop {
            line.clear();
            let read = reader.read_line(&mut line).map_err(io_err)?;
            if read == 0 {
                break;
            }
            n += 1;
            if !line.ends_with('\n') {
                tracing::warn!(path = %path.display(), line = n, "dropping torn final log line");
                break;
            }
            if !line.trim().is_empty() {
                let d: ReviewDecision = serde_json::from_str(&line).map_err(|e| LogError::Corrupt {
                    path: path.clone(),
                    line: n,
                    message: e.to_string(),
                })?;
                decisions.push(d);
            }
            good_len += read as u64;
        }
        drop(reader);
        if file.metadata().map_err(io_err)?.len() != good_len {
            file.set_len(good_len).map_err(io_err)?;
            file.sync_all().map_err(io_err)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io_err)?;
        Ok((Self { path, file }, decisions))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends and syncs one decision; returns only once it is durable.
    pub fn append(&mut self, d: &ReviewDecision) -> io::Result<()> {
        let mut line = serde_json::to_string(d).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::Verdict;

    fn dec(id: &str, rev: u64) -> ReviewDecision {
        ReviewDecision {
            item_id: id.into(),
            revision: rev,
            verdict: Verdict::Accept,
            gap_tags: vec![],
            note: String::new(),
            reviewer: "r".into(),
            timestamp: 1,
        }
    }

    #[test]
    fn append_then_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("reviews.jsonl");
        let (mut log, prior) = ReviewLog::open(&p).unwrap();
        assert!(prior.is_empty());
        log.append(&dec("a", 1)).unwrap();
        log.append(&dec("a", 2)).unwrap();
        drop(log);
        let (_, back) = ReviewLog::open(&p).unwrap();
        assert_eq!(back, [dec("a", 1), dec("a", 2)]);
    }

    #[test]
    fn torn_tail_is_cut() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("reviews.jsonl");
        let (mut log, _) = ReviewLog::open(&p).unwrap();
        log.append(&dec("a", 1)).unwrap();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&p).unwrap();
        f.write_all(b"{\"item_id\":\"a\",\"rev").unwrap();
        drop(f);
        let (mut log, back) = ReviewLog::open(&p).unwrap();
        assert_eq!(back.len(), 1);
        log.append(&dec("a", 2)).unwrap();
        drop(log);
        assert_eq!(ReviewLog::open(&p).unwrap().1.len(), 2);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("reviews.jsonl");
        std::fs::write(&p, "not json\n").unwrap();
        assert!(matches!(ReviewLog::open(&p), Err(LogError::Corrupt { line: 1, .. })));
    }
}
