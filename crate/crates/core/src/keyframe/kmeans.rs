//! Seeded k-means: k-means++ initialisation followed by Lloyd iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KMeansError {
    #[error("no input vectors")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the number of samples ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("vector {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("vector {index} contains a non-finite entry")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Convergence threshold on the largest centroid shift, relative to the
    /// RMS spread of the data around its mean.
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 300,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    /// Nearest-centroid index per input vector, w.r.t. the returned centroids.
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after the initial assignment and after every iteration.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_input(data: &[Vec<f64>], k: usize) -> Result<(), KMeansError> {
    if data.is_empty() {
        return Err(KMeansError::Empty);
    }
    if k == 0 {
        return Err(KMeansError::ZeroK);
    }
    if k > data.len() {
        return Err(KMeansError::KTooLarge { k, n: data.len() });
    }
    let dim = data[0].len();
    for (index, v) in data.iter().enumerate() {
        if v.len() != dim {
            return Err(KMeansError::DimensionMismatch {
                index,
                expected: dim,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(KMeansError::NonFinite { index });
        }
    }
    Ok(())
}

/// Nearest centroid (lowest index on ties) and the squared distance to it.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(data: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    data.par_iter().map(|p| nearest(p, centroids)).collect()
}

fn kmeans_pp(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(data[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = data.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = data[pick].clone();
        for (d, p) in d2.iter_mut().zip(data) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn data_scale(data: &[Vec<f64>]) -> f64 {
    let dim = data[0].len();
    let n = data.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in data {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x / n;
        }
    }
    let var = data.iter().map(|p| sq_dist(p, &mean)).sum::<f64>() / n;
    if var > 0.0 {
        var.sqrt()
    } else {
        1.0
    }
}

/// Means of the assigned members. Empty clusters take over the point
/// farthest from its current centroid (among clusters with spare members).
fn update(data: &[Vec<f64>], assigned: &mut [(usize, f64)], k: usize) -> Vec<Vec<f64>> {
    let dim = data[0].len();
    let mut counts = vec![0usize; k];
    for &(c, _) in assigned.iter() {
        counts[c] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let far = assigned
            .iter()
            .enumerate()
            .filter(|(_, (c, _))| counts[*c] > 1)
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i);
        if let Some(i) = far {
            counts[assigned[i].0] -= 1;
            assigned[i] = (j, 0.0);
            counts[j] = 1;
        }
    }
    let mut sums = vec![vec![0.0; dim]; k];
    for (p, &(c, _)) in data.iter().zip(assigned.iter()) {
        for (s, x) in sums[c].iter_mut().zip(p) {
            *s += x;
        }
    }
    sums.into_iter()
        .zip(&counts)
        .map(|(s, &n)| s.into_iter().map(|x| x / n.max(1) as f64).collect())
        .collect()
}

pub fn kmeans(data: &[Vec<f64>], params: &KMeansParams) -> Result<KMeansResult, KMeansError> {
    check_input(data, params.k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let k = params.k;
    let threshold = params.tol * data_scale(data);

    let mut centroids = kmeans_pp(data, k, &mut rng);
    let mut assigned = assign(data, &centroids);
    let mut history = vec![assigned.iter().map(|a| a.1).sum::<f64>()];
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let next = update(data, &mut assigned, k);
        let shift = next
            .iter()
            .zip(&centroids)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        let reassigned = assign(data, &centroids);
        let changed = reassigned.iter().zip(&assigned).any(|(a, b)| a.0 != b.0);
        assigned = reassigned;
        history.push(assigned.iter().map(|a| a.1).sum());
        if !changed || shift <= threshold {
            break;
        }
    }

    Ok(KMeansResult {
        centroids,
        assignments: assigned.iter().map(|a| a.0).collect(),
        inertia: *history.last().expect("non-empty history"),
        inertia_history: history,
        iterations,
    })
}
