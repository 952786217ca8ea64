//! Planning-oriented key-frame selection.
//!
//! Two passes, both k-means with one exemplar (a real sample, never the
//! centroid) per cluster: one over externally computed image embeddings,
//! one over ego future trajectories.

mod embeddings;
pub mod kmeans;

pub use embeddings::{read_embeddings, write_embeddings_bin, write_embeddings_json, EmbeddingFile};
pub use kmeans::{kmeans, KMeansError, KMeansParams, KMeansResult};

use crate::trajectory::Trajectory;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Trajectory clusters kept by the dynamics pass when not overridden.
pub const DEFAULT_DYNAMICS_K: usize = 200;
/// Share of samples kept as semantic clusters.
pub const DEFAULT_SEMANTIC_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum KeyframeError {
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error("fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("duplicate sample id {0}")]
    DuplicateId(String),
    #[error("embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub sample_id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub cluster: usize,
    pub sample_id: String,
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), KeyframeError> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(KeyframeError::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

/// Per cluster, the member nearest its centroid (smallest id on ties).
/// Clusters left empty contribute nothing.
pub fn exemplars(ids: &[&str], data: &[Vec<f64>], result: &KMeansResult) -> Vec<Exemplar> {
    (0..result.centroids.len())
        .filter_map(|c| {
            result
                .members(c)
                .map(|i| (kmeans::sq_dist(&data[i], &result.centroids[c]), ids[i]))
                .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
                .map(|(_, id)| Exemplar {
                    cluster: c,
                    sample_id: id.to_string(),
                })
        })
        .collect()
}

pub fn semantic_exemplars(
    records: &[EmbeddingRecord],
    fraction: f64,
    seed: u64,
) -> Result<(KMeansResult, Vec<Exemplar>), KeyframeError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(KeyframeError::BadFraction(fraction));
    }
    check_unique(records.iter().map(|r| r.sample_id.as_str()))?;
    let k = ((fraction * records.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let data: Vec<Vec<f64>> = records.iter().map(|r| r.vector.clone()).collect();
    let ids: Vec<&str> = records.iter().map(|r| r.sample_id.as_str()).collect();
    let result = kmeans(&data, &KMeansParams::new(k, seed))?;
    let ex = exemplars(&ids, &data, &result);
    Ok((result, ex))
}

/// Exemplar sample ids of `ceil(fraction * n)` embedding clusters, sorted.
pub fn select_semantic(records: &[EmbeddingRecord], fraction: f64, seed: u64) -> Result<Vec<String>, KeyframeError> {
    let (_, ex) = semantic_exemplars(records, fraction, seed)?;
    Ok(sorted_ids(ex))
}

/// Exemplar sample ids of `k` clusters over concatenated waypoint features.
pub fn select_dynamics(trajs: &[(String, Trajectory)], k: usize, seed: u64) -> Result<Vec<String>, KeyframeError> {
    check_unique(trajs.iter().map(|(id, _)| id.as_str()))?;
    let data: Vec<Vec<f64>> = trajs.iter().map(|(_, t)| t.feature()).collect();
    let ids: Vec<&str> = trajs.iter().map(|(id, _)| id.as_str()).collect();
    let result = kmeans(&data, &KMeansParams::new(k, seed))?;
    Ok(sorted_ids(exemplars(&ids, &data, &result)))
}

fn sorted_ids(ex: Vec<Exemplar>) -> Vec<String> {
    let mut ids: Vec<String> = ex.into_iter().map(|e| e.sample_id).collect();
    ids.sort();
    ids.dedup();
    ids
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, v: &[f64]) -> EmbeddingRecord {
        EmbeddingRecord {
            sample_id: id.into(),
            vector: v.to_vec(),
        }
    }

    #[test]
    fn fraction_one_returns_everything() {
        let recs: Vec<_> = (0..7).map(|i| rec(&format!("s{i}"), &[i as f64, (i * i) as f64])).collect();
        let ids = select_semantic(&recs, 1.0, 11).unwrap();
        assert_eq!(ids.len(), 7);
    }

    #[test]
    fn twenty_percent_of_ten_is_two() {
        let recs: Vec<_> = (0..10).map(|i| rec(&format!("s{i:02}"), &[i as f64, 0.5 * i as f64])).collect();
        assert_eq!(select_semantic(&recs, 0.2, 5).unwrap().len(), 2);
    }

    #[test]
    fn bad_fraction_and_duplicates() {
        let recs = vec![rec("a", &[0.0]), rec("a", &[1.0])];
        assert!(matches!(select_semantic(&recs, 0.0, 0), Err(KeyframeError::BadFraction(_))));
        assert!(matches!(select_semantic(&recs, 0.5, 0), Err(KeyframeError::DuplicateId(_))));
    }

    #[test]
    fn dynamics_identity_when_k_is_n() {
        let trajs: Vec<_> = (0..5)
            .map(|i| {
                let v = i as f64;
                (format!("t{i}"), Trajectory::from_positions(0.5, &[(v, 0.0), (2.0 * v, 0.1 * v)]).unwrap())
            })
            .collect();
        let ids = select_dynamics(&trajs, 5, 2).unwrap();
        assert_eq!(ids, vec!["t0", "t1", "t2", "t3", "t4"]);
    }

    #[test]
    fn tie_goes_to_smallest_id() {
        // both members equidistant from the centroid
        let data = vec![vec![-1.0], vec![1.0]];
        let r = kmeans(&data, &KMeansParams::new(1, 0)).unwrap();
        let ex = exemplars(&["b", "a"], &data, &r);
        assert_eq!(ex[0].sample_id, "a");
    }
}
