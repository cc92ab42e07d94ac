//! Per-image mean average precision, used as a label quality score: a low
//! mAP means predictions and annotations disagree on this image.

use serde::{Deserialize, Serialize};

use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::geometry::iou;

/// IoU thresholds and the recall grid for interpolated AP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    /// Strictly increasing IoU thresholds, each in (0, 1].
    pub iou_thresholds: Vec<f64>,
    /// Number of evenly spaced recall points for AP interpolation.
    pub interpolation_points: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            // 0.50, 0.55, ..., 0.95
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            interpolation_points: 101,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::Config("iou_thresholds must be nonempty".into()));
        }
        let increasing = self.iou_thresholds.windows(2).all(|w| w[0] < w[1]);
        let in_range = self.iou_thresholds.iter().all(|t| *t > 0.0 && *t <= 1.0);
        if !increasing || !in_range {
            return Err(Error::Config(
                "iou_thresholds must be strictly increasing within (0, 1]".into(),
            ));
        }
        if self.interpolation_points < 2 {
            return Err(Error::Config(
                "interpolation_points must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Mean average precision of this image's predictions against its
/// annotations: AP per class present on either side, averaged over the IoU
/// thresholds, then over classes.
///
/// Conventions for empty sides: no annotations and no predictions scores 1
/// (nothing to disagree about); a class with only annotations or only
/// predictions contributes 0.
pub fn per_image_map(image: &ImageRecord, cfg: &MapConfig) -> f64 {
    let mut classes: Vec<usize> = image
        .annotations
        .iter()
        .map(|a| a.class_id)
        .chain(image.predictions.iter().map(|p| p.class_id))
        .collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() {
        return 1.0;
    }

    let mut total = 0.0;
    for &class_id in &classes {
        let gts: Vec<usize> = image
            .annotations
            .iter()
            .enumerate()
            .filter(|(_, a)| a.class_id == class_id)
            .map(|(i, _)| i)
            .collect();
        let mut preds: Vec<usize> = image
            .predictions
            .iter()
            .enumerate()
            .filter(|(_, p)| p.class_id == class_id)
            .map(|(i, _)| i)
            .collect();
        if gts.is_empty() || preds.is_empty() {
            continue; // contributes 0
        }
        // confidence-descending, stable in input order for equal confidences
        preds.sort_by(|&a, &b| {
            image.predictions[b]
                .confidence
                .total_cmp(&image.predictions[a].confidence)
        });

        let mut class_ap = 0.0;
        for &threshold in &cfg.iou_thresholds {
            class_ap += ap_at_threshold(image, &gts, &preds, threshold, cfg.interpolation_points);
        }
        total += class_ap / cfg.iou_thresholds.len() as f64;
    }
    total / classes.len() as f64
}

/// Greedy matching at one IoU threshold followed by interpolated AP over the
/// precision-recall curve.
fn ap_at_threshold(
    image: &ImageRecord,
    gts: &[usize],
    preds_by_conf: &[usize],
    threshold: f64,
    interpolation_points: usize,
) -> f64 {
    let mut gt_used = vec![false; gts.len()];
    let mut tp_flags = Vec::with_capacity(preds_by_conf.len());
    for &pi in preds_by_conf {
        let pred_box = &image.predictions[pi].bbox;
        let mut best: Option<(usize, f64)> = None;
        for (slot, &gi) in gts.iter().enumerate() {
            if gt_used[slot] {
                continue;
            }
            let v = iou(pred_box, &image.annotations[gi].bbox);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((slot, v));
            }
        }
        match best {
            Some((slot, v)) if v >= threshold => {
                gt_used[slot] = true;
                tp_flags.push(true);
            }
            _ => tp_flags.push(false),
        }
    }

    // precision-recall points in prediction rank order
    let num_gt = gts.len() as f64;
    let mut tp = 0.0;
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(tp_flags.len());
    for (rank, &hit) in tp_flags.iter().enumerate() {
        if hit {
            tp += 1.0;
        }
        let precision = tp / (rank as f64 + 1.0);
        let recall = tp / num_gt;
        curve.push((recall, precision));
    }

    // envelope: max precision from the right
    let mut best = 0.0f64;
    for point in curve.iter_mut().rev() {
        best = best.max(point.1);
        point.1 = best;
    }

    // sample the envelope at evenly spaced recall points
    let n = interpolation_points;
    let mut sum = 0.0;
    let mut idx = 0;
    for j in 0..n {
        let r = j as f64 / (n - 1) as f64;
        while idx < curve.len() && curve[idx].0 < r {
            idx += 1;
        }
        if idx < curve.len() {
            sum += curve[idx].1;
        }
    }
    sum / n as f64
}
