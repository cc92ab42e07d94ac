//! Box-cluster reduction: annotated and predicted boxes are grouped by
//! single-linkage agglomerative clustering under IoU distance, each cluster
//! gets a label and a predicted class distribution, and the image score is
//! the mean cluster self-confidence.

use serde::{Deserialize, Serialize};

use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::geometry::iou;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClodConfig {
    /// Merging stops once the smallest single-link IoU distance (1 - IoU)
    /// between clusters exceeds this cutoff.
    pub linkage_cutoff: f64,
}

impl Default for ClodConfig {
    fn default() -> Self {
        ClodConfig {
            linkage_cutoff: 0.5,
        }
    }
}

impl ClodConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.linkage_cutoff > 0.0 && self.linkage_cutoff <= 1.0) {
            return Err(Error::Config(format!(
                "linkage_cutoff must lie in (0, 1], got {}",
                self.linkage_cutoff
            )));
        }
        Ok(())
    }
}

/// One cluster of boxes: annotation/prediction member indices (into the
/// image's lists), the assigned label, and the predicted distribution over
/// K classes plus background (index K).
#[derive(Debug, Clone, PartialEq)]
pub struct BoxCluster {
    pub annotated: Vec<usize>,
    pub predicted: Vec<usize>,
    /// Majority class of the annotated members; `num_classes` (background)
    /// when the cluster has none.
    pub label: usize,
    /// Confidence-weighted average of the members' predicted distributions;
    /// one-hot background when the cluster has no predicted members.
    pub probs: Vec<f64>,
}

impl BoxCluster {
    /// Predicted probability of the cluster's own label.
    pub fn self_confidence(&self) -> f64 {
        self.probs[self.label]
    }
}

/// Single-linkage agglomerative clustering over the union of annotated and
/// predicted boxes with distance `1 - IoU`. Merges happen in ascending
/// distance order while the minimum inter-cluster distance stays within the
/// cutoff; ties are broken by the lowest member index, so the outcome is
/// deterministic.
pub fn clod_clusters(image: &ImageRecord, num_classes: usize, cfg: &ClodConfig) -> Vec<BoxCluster> {
    let n_ann = image.annotations.len();
    let n_pred = image.predictions.len();
    let n = n_ann + n_pred;
    if n == 0 {
        return Vec::new();
    }

    // item index: annotations first, then predictions
    let box_of = |i: usize| {
        if i < n_ann {
            &image.annotations[i].bbox
        } else {
            &image.predictions[i - n_ann].bbox
        }
    };

    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    loop {
        // smallest single-link distance over all cluster pairs;
        // ties resolved by the (lowest, lowest) member-index key
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let mut link = f64::INFINITY;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        link = link.min(1.0 - iou(box_of(i), box_of(j)));
                    }
                }
                let better = match best {
                    None => true,
                    Some((d, pa, pb)) => {
                        link < d
                            || (link == d
                                && (clusters[a][0], clusters[b][0])
                                    < (clusters[pa][0], clusters[pb][0]))
                    }
                };
                if better {
                    best = Some((link, a, b));
                }
            }
        }
        match best {
            Some((d, a, b)) if d <= cfg.linkage_cutoff => {
                let merged = clusters.remove(b);
                clusters[a].extend(merged);
                clusters[a].sort_unstable();
            }
            _ => break,
        }
    }
    clusters.sort_by_key(|c| c[0]);

    clusters
        .into_iter()
        .map(|members| {
            let annotated: Vec<usize> = members.iter().copied().filter(|&i| i < n_ann).collect();
            let predicted: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| i >= n_ann)
                .map(|i| i - n_ann)
                .collect();

            // majority class among annotated members, ties to the lowest id
            let label = if annotated.is_empty() {
                num_classes
            } else {
                let mut counts = vec![0usize; num_classes];
                for &i in &annotated {
                    counts[image.annotations[i].class_id] += 1;
                }
                let mut label = 0;
                for (class_id, &count) in counts.iter().enumerate() {
                    if count > counts[label] {
                        label = class_id;
                    }
                }
                label
            };

            let mut probs = vec![0.0; num_classes + 1];
            if predicted.is_empty() {
                probs[num_classes] = 1.0;
            } else {
                let mut total = 0.0;
                for &i in &predicted {
                    let p = &image.predictions[i];
                    probs[p.class_id] += p.confidence * p.confidence;
                    probs[num_classes] += p.confidence * (1.0 - p.confidence);
                    total += p.confidence;
                }
                for v in &mut probs {
                    *v /= total;
                }
            }

            BoxCluster {
                annotated,
                predicted,
                label,
                probs,
            }
        })
        .collect()
}

/// Mean cluster self-confidence for the image; 1 when there are no boxes.
pub fn clod_score(image: &ImageRecord, num_classes: usize, cfg: &ClodConfig) -> f64 {
    let clusters = clod_clusters(image, num_classes, cfg);
    if clusters.is_empty() {
        return 1.0;
    }
    clusters
        .iter()
        .map(BoxCluster::self_confidence)
        .sum::<f64>()
        / clusters.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AnnotatedBox, PredictedBox};
    use crate::geometry::{BoundingBox, ImageDims};

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn image(
        annotations: Vec<(BoundingBox, usize)>,
        predictions: Vec<(BoundingBox, usize, f64)>,
    ) -> ImageRecord {
        ImageRecord {
            image_id: 1,
            dims: ImageDims::new(100, 100).unwrap(),
            annotations: annotations
                .into_iter()
                .map(|(bbox, class_id)| AnnotatedBox { bbox, class_id })
                .collect(),
            predictions: predictions
                .into_iter()
                .map(|(bbox, class_id, confidence)| PredictedBox {
                    bbox,
                    class_id,
                    confidence,
                })
                .collect(),
        }
    }

    #[test]
    fn identical_pair_forms_one_cluster() {
        let b = bb(10.0, 10.0, 20.0, 20.0);
        let img = image(vec![(b, 0)], vec![(b, 0, 0.8)]);
        let clusters = clod_clusters(&img, 2, &ClodConfig::default());
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].annotated, vec![0]);
        assert_eq!(clusters[0].predicted, vec![0]);
    }

    #[test]
    fn disjoint_boxes_stay_separate() {
        let img = image(
            vec![(bb(0.0, 0.0, 10.0, 10.0), 0)],
            vec![(bb(50.0, 50.0, 60.0, 60.0), 0, 0.8)],
        );
        let clusters = clod_clusters(&img, 2, &ClodConfig::default());
        assert_eq!(clusters.len(), 2);
    }

    #[test]
    fn single_linkage_chains_across_the_cutoff() {
        // consecutive IoU 0.6 (distance 0.4); first and last boxes are
        // disjoint, yet the chain merges into one cluster
        let chain = [
            bb(0.0, 0.0, 10.0, 10.0),
            bb(2.5, 0.0, 12.5, 10.0),
            bb(5.0, 0.0, 15.0, 10.0),
            bb(7.5, 0.0, 17.5, 10.0),
            bb(10.0, 0.0, 20.0, 10.0),
        ];
        for w in chain.windows(2) {
            assert!((iou(&w[0], &w[1]) - 0.6).abs() < 1e-12);
        }
        assert_eq!(iou(&chain[0], &chain[4]), 0.0);

        let img = image(
            vec![(chain[0], 0), (chain[2], 0), (chain[4], 0)],
            vec![(chain[1], 0, 0.8), (chain[3], 0, 0.8)],
        );
        let clusters = clod_clusters(&img, 1, &ClodConfig::default());
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].annotated, vec![0, 1, 2]);
        assert_eq!(clusters[0].predicted, vec![0, 1]);
    }

    #[test]
    fn matched_cluster_scores_its_confidence() {
        let b = bb(10.0, 10.0, 20.0, 20.0);
        let img = image(vec![(b, 0)], vec![(b, 0, 0.8)]);
        let clusters = clod_clusters(&img, 2, &ClodConfig::default());
        assert!((clusters[0].self_confidence() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn unmatched_annotation_scores_zero() {
        let img = image(vec![(bb(0.0, 0.0, 10.0, 10.0), 1)], vec![]);
        let clusters = clod_clusters(&img, 2, &ClodConfig::default());
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].label, 1);
        assert_eq!(clusters[0].probs, vec![0.0, 0.0, 1.0]);
        assert_eq!(clusters[0].self_confidence(), 0.0);
    }

    #[test]
    fn image_score_is_mean_over_clusters() {
        let b = bb(10.0, 10.0, 20.0, 20.0);
        let img = image(
            vec![(b, 0), (bb(50.0, 50.0, 60.0, 60.0), 1)],
            vec![(b, 0, 0.8)],
        );
        let s = clod_score(&img, 2, &ClodConfig::default());
        assert!((s - (0.8 + 0.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_image_scores_one() {
        let img = image(vec![], vec![]);
        assert_eq!(clod_score(&img, 2, &ClodConfig::default()), 1.0);
    }

    #[test]
    fn clusters_partition_the_boxes() {
        let img = image(
            vec![
                (bb(0.0, 0.0, 10.0, 10.0), 0),
                (bb(5.0, 0.0, 15.0, 10.0), 1),
                (bb(80.0, 80.0, 90.0, 90.0), 0),
            ],
            vec![
                (bb(1.0, 0.0, 11.0, 10.0), 0, 0.7),
                (bb(79.0, 80.0, 90.0, 91.0), 0, 0.9),
            ],
        );
        let clusters = clod_clusters(&img, 2, &ClodConfig::default());
        let mut ann_seen: Vec<usize> = clusters.iter().flat_map(|c| c.annotated.clone()).collect();
        let mut pred_seen: Vec<usize> = clusters.iter().flat_map(|c| c.predicted.clone()).collect();
        ann_seen.sort_unstable();
        pred_seen.sort_unstable();
        assert_eq!(ann_seen, vec![0, 1, 2]);
        assert_eq!(pred_seen, vec![0, 1]);
    }

    #[test]
    fn raising_the_cutoff_never_adds_clusters() {
        let img = image(
            vec![
                (bb(0.0, 0.0, 10.0, 10.0), 0),
                (bb(4.0, 0.0, 14.0, 10.0), 0),
                (bb(40.0, 40.0, 55.0, 55.0), 1),
            ],
            vec![(bb(42.0, 40.0, 55.0, 53.0), 1, 0.8)],
        );
        let mut prev = usize::MAX;
        for cutoff in [0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
            let n = clod_clusters(
                &img,
                2,
                &ClodConfig {
                    linkage_cutoff: cutoff,
                },
            )
            .len();
            assert!(n <= prev, "cutoff {cutoff} raised cluster count to {n}");
            prev = n;
        }
    }
}
