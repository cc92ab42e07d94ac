//! Tile-grid reduction: the image becomes a J x J grid of classification
//! instances. Each tile takes the label of the annotated box covering it (or
//! background) and a predicted class distribution smoothed from the predicted
//! boxes; the tile's self-confidence in its label is its quality, pooled over
//! the grid with a geometric mean.

use serde::{Deserialize, Serialize};

use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::geometry::{similarity, BoundingBox, SimilarityParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TileConfig {
    /// Grid size J: the image is split into J x J equal tiles.
    pub grid_size: usize,
    /// Minimum fraction of a tile an annotated box must cover for the tile
    /// to take that box's label.
    pub overlap_threshold: f64,
    /// Weight of the background pseudo-box mixed into every tile's predicted
    /// distribution.
    pub background_prior_weight: f64,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig {
            grid_size: 8,
            overlap_threshold: 0.5,
            background_prior_weight: 1.0,
        }
    }
}

impl TileConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 1 {
            return Err(Error::Config("grid_size must be at least 1".into()));
        }
        if !(self.overlap_threshold > 0.0 && self.overlap_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "overlap_threshold must lie in (0, 1], got {}",
                self.overlap_threshold
            )));
        }
        if self.background_prior_weight < 0.0 || !self.background_prior_weight.is_finite() {
            return Err(Error::Config(format!(
                "background_prior_weight must be nonnegative, got {}",
                self.background_prior_weight
            )));
        }
        Ok(())
    }
}

/// Label quality of one image under the tile reduction: geometric mean over
/// all J^2 tiles of each tile's predicted probability for its own label.
/// Class `num_classes` acts as the background label.
pub fn tile_score(
    image: &ImageRecord,
    num_classes: usize,
    cfg: &TileConfig,
    params: &SimilarityParams,
) -> f64 {
    let j = cfg.grid_size;
    let background = num_classes;
    let tile_w = image.dims.width as f64 / j as f64;
    let tile_h = image.dims.height as f64 / j as f64;

    let mut log_sum = 0.0;
    for row in 0..j {
        for col in 0..j {
            let tile = BoundingBox {
                x1: col as f64 * tile_w,
                y1: row as f64 * tile_h,
                x2: (col + 1) as f64 * tile_w,
                y2: (row + 1) as f64 * tile_h,
            };
            let tile_area = tile.area();

            // label: class of the annotation covering the largest fraction of
            // the tile, if that fraction clears the threshold; ties keep the
            // first annotation in input order
            let mut label = background;
            let mut best_fraction = 0.0;
            for ann in &image.annotations {
                let fraction = ann.bbox.intersection_area(&tile) / tile_area;
                if fraction > best_fraction {
                    best_fraction = fraction;
                    if fraction >= cfg.overlap_threshold {
                        label = ann.class_id;
                    }
                }
            }

            // predicted distribution: similarity-weighted average of per-box
            // distributions (confidence on the predicted class, remainder on
            // background) plus the background prior pseudo-box
            let mut probs = vec![0.0; num_classes + 1];
            let mut total_weight = cfg.background_prior_weight;
            probs[background] += cfg.background_prior_weight;
            for pred in &image.predictions {
                let w = similarity(&tile, &pred.bbox, image.dims, params);
                probs[pred.class_id] += w * pred.confidence;
                probs[background] += w * (1.0 - pred.confidence);
                total_weight += w;
            }

            let p_label = if total_weight > 0.0 {
                probs[label] / total_weight
            } else {
                // no prior and no predictions: undefined distribution,
                // score the tile as uninformative
                if label == background {
                    1.0
                } else {
                    0.0
                }
            };
            if p_label <= 0.0 {
                return 0.0;
            }
            log_sum += p_label.ln();
        }
    }
    let n_tiles = (j * j) as f64;
    (log_sum / n_tiles).exp().clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AnnotatedBox, PredictedBox};
    use crate::geometry::ImageDims;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn image_100(
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
    fn empty_image_scores_one() {
        let img = image_100(vec![], vec![]);
        assert_eq!(
            tile_score(
                &img,
                3,
                &TileConfig::default(),
                &SimilarityParams::default()
            ),
            1.0
        );
    }

    #[test]
    fn full_cover_score_approaches_confidence_as_prior_vanishes() {
        let full = bb(0.0, 0.0, 100.0, 100.0);
        let img = image_100(vec![(full, 0)], vec![(full, 0, 0.9)]);
        let params = SimilarityParams::default();
        let mut cfg = TileConfig {
            grid_size: 2,
            ..TileConfig::default()
        };
        cfg.background_prior_weight = 1e-9;
        let s = tile_score(&img, 1, &cfg, &params);
        assert!((s - 0.9).abs() < 1e-6, "got {s}");
    }

    #[test]
    fn two_by_two_grid_matches_hand_computation() {
        // one annotated + identical predicted box covering the top-left tile
        let box_tl = bb(0.0, 0.0, 50.0, 50.0);
        let img = image_100(vec![(box_tl, 0)], vec![(box_tl, 0, 0.9)]);
        let params = SimilarityParams::default();
        let cfg = TileConfig {
            grid_size: 2,
            ..TileConfig::default()
        };
        let num_classes = 1;

        // per-tile arithmetic, written out independently:
        // each tile's distribution is (w*(0.9, 0.1) + 1*(0, 1)) / (w + 1)
        // with w = similarity(tile, box)
        let tiles = [
            bb(0.0, 0.0, 50.0, 50.0),
            bb(50.0, 0.0, 100.0, 50.0),
            bb(0.0, 50.0, 50.0, 100.0),
            bb(50.0, 50.0, 100.0, 100.0),
        ];
        let labels = [0usize, 1, 1, 1]; // top-left carries class 0, rest background
        let mut product = 1.0;
        for (tile, &label) in tiles.iter().zip(labels.iter()) {
            let w = similarity(tile, &box_tl, img.dims, &params);
            let p_class = w * 0.9 / (w + 1.0);
            let p_bg = (w * 0.1 + 1.0) / (w + 1.0);
            product *= if label == 0 { p_class } else { p_bg };
        }
        let expected = product.powf(0.25);

        let got = tile_score(&img, num_classes, &cfg, &params);
        assert!(
            (got - expected).abs() < 1e-12,
            "got {got}, expected {expected}"
        );
        // the mislabeled-looking top-left tile (0.45) dominates
        assert!(got < 0.85 && got > 0.5);
    }

    #[test]
    fn grid_size_one_is_a_single_instance() {
        let full = bb(0.0, 0.0, 100.0, 100.0);
        let img = image_100(vec![(full, 0)], vec![(full, 0, 0.8)]);
        let cfg = TileConfig {
            grid_size: 1,
            ..TileConfig::default()
        };
        let s = tile_score(&img, 1, &cfg, &SimilarityParams::default());
        // single tile, label 0, distribution (0.8, 0.2)/2 with the prior
        assert!((s - 0.4).abs() < 1e-12);
    }

    #[test]
    fn score_stays_in_unit_interval() {
        let img = image_100(
            vec![
                (bb(10.0, 10.0, 40.0, 40.0), 0),
                (bb(60.0, 60.0, 90.0, 90.0), 1),
            ],
            vec![(bb(12.0, 10.0, 40.0, 42.0), 0, 0.97)],
        );
        let s = tile_score(
            &img,
            2,
            &TileConfig::default(),
            &SimilarityParams::default(),
        );
        assert!((0.0..=1.0).contains(&s));
    }
}
