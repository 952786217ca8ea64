//! CIDEr: TF-IDF weighted n-gram cosine similarity, n = 1..4, averaged over
//! n and scaled by 10.
//!
//! Document frequency counts, for each n-gram, the reference sets that
//! contain it; `idf = ln(N / max(1, df))` with `N` the number of reference
//! sets. Tokens are lowercase alphanumeric runs, without stemming. No length
//! penalty or count clipping is applied.

use super::keywords::tokenize;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

pub const MAX_N: usize = 4;

type Grams = HashMap<Vec<String>, f64>;

fn ngrams(tokens: &[String], n: usize) -> Grams {
    let mut m = Grams::new();
    for w in tokens.windows(n) {
        *m.entry(w.to_vec()).or_default() += 1.0;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiderReport {
    pub scores: BTreeMap<String, f64>,
    pub mean: f64,
}

fn weighted(g: &Grams, df: &HashMap<Vec<String>, usize>, log_n: f64) -> Grams {
    g.iter()
        .map(|(k, &tf)| {
            let d = df.get(k).copied().unwrap_or(0).max(1) as f64;
            (k.clone(), tf * (log_n - d.ln()))
        })
        .collect()
}

fn cosine(a: &Grams, b: &Grams) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Scores every candidate id that has references. The mean is NaN when no
/// id is scored.
pub fn cider(candidates: &BTreeMap<String, String>, references: &BTreeMap<String, Vec<String>>) -> CiderReport {
    let refs: BTreeMap<&String, Vec<Vec<String>>> = references
        .iter()
        .map(|(id, rs)| (id, rs.iter().map(|r| tokenize(r)).collect()))
        .collect();
    let log_n = (refs.len().max(1) as f64).ln();

    let mut df: Vec<HashMap<Vec<String>, usize>> = vec![HashMap::new(); MAX_N];
    for rs in refs.values() {
        for (n, df_n) in df.iter_mut().enumerate() {
            let seen: HashSet<Vec<String>> = rs.iter().flat_map(|r| ngrams(r, n + 1).into_keys()).collect();
            for g in seen {
                *df_n.entry(g).or_default() += 1;
            }
        }
    }

    let mut scores = BTreeMap::new();
    for (id, cand) in candidates {
        let Some(rs) = refs.get(id) else {
            continue;
        };
        let ct = tokenize(cand);
        let mut total = 0.0;
        for n in 1..=MAX_N {
            let vc = weighted(&ngrams(&ct, n), &df[n - 1], log_n);
            let sims: f64 = rs
                .iter()
                .map(|r| cosine(&vc, &weighted(&ngrams(r, n), &df[n - 1], log_n)))
                .sum();
            total += if rs.is_empty() { 0.0 } else { sims / rs.len() as f64 };
        }
        scores.insert(id.clone(), 10.0 * total / MAX_N as f64);
    }
    let mean = scores.values().sum::<f64>() / scores.len() as f64;
    CiderReport { scores, mean }
}
