//! Retrieval-style evaluation of a score file against ground truth: rank
//! images ascending by score (lowest = most suspect first) and measure how
//! well the flagged images concentrate at the top.
//!
//! The ranking is total and deterministic: ties are broken by image id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Headline metrics plus the per-k precision curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub average_precision: f64,
    pub precision_at_100: f64,
    /// Effective k used for "precision at 100" (min(100, N) on small sets).
    pub precision_at_100_k: usize,
    /// Precision at T, where T is the true number of mislabeled images.
    pub precision_at_t: f64,
    pub true_error_count: usize,
    pub num_images: usize,
    /// precision at k for every k in 1..=N (diagnostic).
    pub precision_curve: Vec<f64>,
}

fn check_id_sets(scores: &BTreeMap<u64, f64>, truth: &BTreeMap<u64, bool>) -> Result<()> {
    if scores.len() == truth.len() && scores.keys().eq(truth.keys()) {
        return Ok(());
    }
    let only_scores: Vec<u64> = scores
        .keys()
        .filter(|id| !truth.contains_key(id))
        .copied()
        .collect();
    let only_truth: Vec<u64> = truth
        .keys()
        .filter(|id| !scores.contains_key(id))
        .copied()
        .collect();
    Err(Error::Evaluation(format!(
        "image id sets differ: {} only in scores {:?}, {} only in truth {:?}",
        only_scores.len(),
        truncated(&only_scores),
        only_truth.len(),
        truncated(&only_truth),
    )))
}

fn truncated(ids: &[u64]) -> Vec<u64> {
    ids.iter().take(10).copied().collect()
}

/// Image ids sorted ascending by (score, image id).
pub fn rank_ascending(scores: &BTreeMap<u64, f64>) -> Vec<u64> {
    let mut ids: Vec<u64> = scores.keys().copied().collect();
    ids.sort_by(|a, b| scores[a].total_cmp(&scores[b]).then(a.cmp(b)));
    ids
}

/// Mean, over the truly mislabeled images, of the precision at each one's
/// rank in the ascending-score ordering. Errors when the truth contains no
/// positives (the metric is undefined).
pub fn average_precision(scores: &BTreeMap<u64, f64>, truth: &BTreeMap<u64, bool>) -> Result<f64> {
    check_id_sets(scores, truth)?;
    let positives = truth.values().filter(|&&v| v).count();
    if positives == 0 {
        return Err(Error::Evaluation(
            "truth flags no mislabeled images; average precision is undefined".into(),
        ));
    }
    let ranking = rank_ascending(scores);
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank0, id) in ranking.iter().enumerate() {
        if truth[id] {
            hits += 1;
            sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Fraction of truly mislabeled images among the k lowest-scoring ones.
pub fn precision_at_k(
    scores: &BTreeMap<u64, f64>,
    truth: &BTreeMap<u64, bool>,
    k: usize,
) -> Result<f64> {
    check_id_sets(scores, truth)?;
    if k == 0 || k > scores.len() {
        return Err(Error::Evaluation(format!(
            "k must lie in 1..={}, got {k}",
            scores.len()
        )));
    }
    let ranking = rank_ascending(scores);
    let hits = ranking[..k].iter().filter(|id| truth[*id]).count();
    Ok(hits as f64 / k as f64)
}

/// All headline metrics at once: average precision, precision at
/// min(100, N), precision at T, and the full precision curve.
pub fn evaluate(scores: &BTreeMap<u64, f64>, truth: &BTreeMap<u64, bool>) -> Result<MetricsReport> {
    let average_precision = average_precision(scores, truth)?;
    let n = scores.len();
    let t = truth.values().filter(|&&v| v).count();
    let ranking = rank_ascending(scores);

    let mut precision_curve = Vec::with_capacity(n);
    let mut hits = 0usize;
    for (rank0, id) in ranking.iter().enumerate() {
        if truth[id] {
            hits += 1;
        }
        precision_curve.push(hits as f64 / (rank0 + 1) as f64);
    }

    let k100 = n.min(100);
    Ok(MetricsReport {
        average_precision,
        precision_at_100: precision_curve[k100 - 1],
        precision_at_100_k: k100,
        precision_at_t: precision_curve[t - 1],
        true_error_count: t,
        num_images: n,
        precision_curve,
    })
}
