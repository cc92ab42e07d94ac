//! The ObjectLab label-quality score: per-box quality estimates for the three
//! mistake subtypes (badly located, swapped class, overlooked object), softmin
//! pooling, and the per-image geometric-mean score.
//!
//! Scoring is a pure function per image given the dataset-wide minimum pair
//! similarity `sim_star`; the per-image pass fans out across workers and is
//! merged back in image-id order, so results are identical for any worker
//! count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::{iou, similarity, SimilarityParams};

/// Maximum possible per-box quality estimate.
pub const Q_STAR: f64 = 1.0;

/// How overlooked-object scoring treats a confident prediction that overlaps
/// a same-class annotation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlookedMode {
    /// An overlapping same-class annotation counts as a match: the prediction
    /// gets the maximum quality estimate. Default.
    #[default]
    MatchedSkip,
    /// Overlapping same-class annotations are merely excluded from the
    /// candidate set, so a perfectly matched prediction falls through to the
    /// no-match branch. Kept for fidelity experiments.
    Literal,
}

/// Knobs for the ObjectLab scorer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub similarity: SimilarityParams,
    /// High-confidence threshold; only predictions whose confidence exceeds
    /// it (strictly) count as swap or overlooked evidence.
    pub tau_up: f64,
    /// Softmin temperature. 1 reproduces plain `softmax(1 - q)` weighting;
    /// lower is sharper (closer to min), higher is flatter (closer to mean).
    pub softmin_temperature: f64,
    pub overlooked_mode: OverlookedMode,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            similarity: SimilarityParams::default(),
            tau_up: 0.95,
            softmin_temperature: 1.0,
            overlooked_mode: OverlookedMode::MatchedSkip,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        self.similarity.validate()?;
        if !(self.tau_up > 0.0 && self.tau_up <= 1.0) {
            return Err(Error::Config(format!(
                "tau_up must lie in (0, 1], got {}",
                self.tau_up
            )));
        }
        if self.softmin_temperature <= 0.0 || !self.softmin_temperature.is_finite() {
            return Err(Error::Config(format!(
                "softmin_temperature must be positive, got {}",
                self.softmin_temperature
            )));
        }
        Ok(())
    }
}

/// Per-box quality estimates for each subtype, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerBoxScores {
    pub badloc: Vec<f64>,
    pub swap: Vec<f64>,
    pub overlook: Vec<f64>,
}

/// The label-quality score of one image: the overall geometric mean and the
/// three pooled subtype scores, with the raw per-box vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub image_id: u64,
    pub score: f64,
    pub badloc: f64,
    pub swap: f64,
    pub overlook: f64,
    pub per_box: PerBoxScores,
}

/// Softmin pooling: the inner product of `values` with
/// `softmax((1 - values) / temperature)`. A smooth minimum: always between
/// the minimum and the arithmetic mean of the input.
///
/// `values` must be nonempty with entries in [0, 1]; callers handle empty
/// sets before pooling.
pub fn softmin(values: &[f64], temperature: f64) -> f64 {
    assert!(!values.is_empty(), "softmin requires a nonempty input");
    assert!(temperature > 0.0, "softmin temperature must be positive");
    // max-shifted exponents keep exp() in range for small temperatures
    let max_arg = values
        .iter()
        .map(|q| (1.0 - q) / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for &q in values {
        let w = ((1.0 - q) / temperature - max_arg).exp();
        num += q * w;
        den += w;
    }
    num / den
}

/// Location-quality estimate for each annotated box, in annotation order:
/// the best similarity among same-class predictions that overlap the box, or
/// the maximum estimate when no such prediction exists.
pub fn badloc_box_scores(image: &ImageRecord, cfg: &ScoringConfig) -> Vec<f64> {
    image
        .annotations
        .iter()
        .map(|ann| {
            let mut best: Option<f64> = None;
            for pred in &image.predictions {
                if pred.class_id == ann.class_id && iou(&pred.bbox, &ann.bbox) > 0.0 {
                    let s = similarity(&ann.bbox, &pred.bbox, image.dims, &cfg.similarity);
                    best = Some(best.map_or(s, |b: f64| b.max(s)));
                }
            }
            best.unwrap_or(Q_STAR)
        })
        .collect()
}

/// Class-label quality estimate for each annotated box, in annotation order:
/// one minus the best similarity among predictions of a *different* class
/// whose confidence exceeds `tau_up`, or the maximum estimate when there is
/// no such prediction.
pub fn swapped_box_scores(image: &ImageRecord, cfg: &ScoringConfig) -> Vec<f64> {
    image
        .annotations
        .iter()
        .map(|ann| {
            let mut best: Option<f64> = None;
            for pred in &image.predictions {
                if pred.class_id != ann.class_id && pred.confidence > cfg.tau_up {
                    let s = similarity(&ann.bbox, &pred.bbox, image.dims, &cfg.similarity);
                    best = Some(best.map_or(s, |b: f64| b.max(s)));
                }
            }
            best.map_or(Q_STAR, |b| 1.0 - b)
        })
        .collect()
}

/// Quality estimate for each high-confidence predicted box (confidence above
/// `tau_up`), asking whether it points at an object the annotators missed.
///
/// Per prediction of class k: under the default matched-skip mode, an
/// overlapping same-class annotation counts as a match (maximum estimate);
/// otherwise the best similarity to the non-overlapping same-class
/// annotations is used, and when class k is absent altogether the estimate is
/// `sim_star * (1 - confidence)`. The literal mode skips the match shortcut.
///
/// Returns `[Q_STAR]` when no prediction clears `tau_up`, so the pooled
/// overlook score of such images is the maximum.
pub fn overlooked_box_scores(image: &ImageRecord, cfg: &ScoringConfig, sim_star: f64) -> Vec<f64> {
    let mut scores = Vec::new();
    for pred in &image.predictions {
        if pred.confidence <= cfg.tau_up {
            continue;
        }
        let mut overlapping_same_class = false;
        let mut best_nonoverlap: Option<f64> = None;
        for ann in &image.annotations {
            if ann.class_id != pred.class_id {
                continue;
            }
            if iou(&ann.bbox, &pred.bbox) > 0.0 {
                overlapping_same_class = true;
            } else {
                let s = similarity(&ann.bbox, &pred.bbox, image.dims, &cfg.similarity);
                best_nonoverlap = Some(best_nonoverlap.map_or(s, |b: f64| b.max(s)));
            }
        }
        let q = match cfg.overlooked_mode {
            OverlookedMode::MatchedSkip if overlapping_same_class => Q_STAR,
            _ => best_nonoverlap.unwrap_or(sim_star * (1.0 - pred.confidence)),
        };
        scores.push(q);
    }
    if scores.is_empty() {
        scores.push(Q_STAR);
    }
    scores
}

/// Score one image: pool each subtype with softmin and combine with a
/// geometric mean. Images with no annotations pool the badloc and swap
/// subtypes to the maximum estimate, mirroring the empty-case rule of the
/// overlook subtype, so such images are flagged only through the overlooked
/// pathway.
pub fn objectlab_score(image: &ImageRecord, cfg: &ScoringConfig, sim_star: f64) -> ImageScore {
    let t = cfg.softmin_temperature;
    let badloc_scores = badloc_box_scores(image, cfg);
    let swap_scores = swapped_box_scores(image, cfg);
    let overlook_scores = overlooked_box_scores(image, cfg, sim_star);

    let badloc = if badloc_scores.is_empty() {
        Q_STAR
    } else {
        softmin(&badloc_scores, t)
    };
    let swap = if swap_scores.is_empty() {
        Q_STAR
    } else {
        softmin(&swap_scores, t)
    };
    let overlook = softmin(&overlook_scores, t);

    let score = (badloc * swap * overlook).cbrt();
    ImageScore {
        image_id: image.image_id,
        score,
        badloc,
        swap,
        overlook,
        per_box: PerBoxScores {
            badloc: badloc_scores,
            swap: swap_scores,
            overlook: overlook_scores,
        },
    }
}

/// Score every image: one pass to compute the dataset-wide minimum pair
/// similarity, then an independent per-image pass. Output is ordered by
/// image id and deterministic.
pub fn score_dataset(dataset: &Dataset, cfg: &ScoringConfig) -> Result<Vec<ImageScore>> {
    cfg.validate()?;
    let sim_star = dataset.min_similarity(&cfg.similarity);
    Ok(dataset
        .images
        .par_iter()
        .map(|img| objectlab_score(img, cfg, sim_star))
        .collect())
}
