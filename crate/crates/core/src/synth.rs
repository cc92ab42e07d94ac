//! Synthetic data for benchmarking the scorers without a trained model:
//! a generator for clean datasets of well-separated boxes, and an oracle
//! predictor that turns any annotation set into a prediction set with
//! configurable confidence and box jitter.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::coco::{
    CocoAnnotation, CocoAnnotationFile, CocoCategory, CocoDetection, CocoImage,
};
use crate::dataset::{dataset_from_coco, Dataset, IngestConfig};
use crate::error::{Error, Result};
use crate::rng::per_image_rng;

/// Layout of the generated dataset. Boxes are placed one per grid cell with
/// generous margins, so boxes within an image never overlap and their
/// normalized corner vectors stay well apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub num_images: usize,
    pub num_classes: usize,
    pub width: u32,
    pub height: u32,
    pub min_boxes: usize,
    pub max_boxes: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_images: 500,
            num_classes: 5,
            width: 640,
            height: 480,
            min_boxes: 1,
            max_boxes: 5,
            seed: 0,
        }
    }
}

// cell grid and margins for the default 640x480 canvas
const GRID_COLS: usize = 3;
const GRID_ROWS: usize = 2;
const MARGIN_X: i64 = 40;
const MARGIN_Y: i64 = 45;
const BOX_W: (i64, i64) = (50, 120);
const BOX_H: (i64, i64) = (60, 140);

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_images == 0 || self.num_classes == 0 {
            return Err(Error::Config(
                "generator needs at least one image and one class".into(),
            ));
        }
        if self.min_boxes < 1
            || self.min_boxes > self.max_boxes
            || self.max_boxes > GRID_COLS * GRID_ROWS
        {
            return Err(Error::Config(format!(
                "boxes per image must satisfy 1 <= min <= max <= {}",
                GRID_COLS * GRID_ROWS
            )));
        }
        let cell_w = self.width as i64 / GRID_COLS as i64;
        let cell_h = self.height as i64 / GRID_ROWS as i64;
        if cell_w - 2 * MARGIN_X < BOX_W.1 || cell_h - 2 * MARGIN_Y < BOX_H.1 {
            return Err(Error::Config(format!(
                "canvas {}x{} too small for the box layout",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Generate a clean dataset: integer pixel coordinates, one box per grid
/// cell, classes drawn uniformly. Original category ids are 1..=K so the
/// dense remapping path is exercised end to end.
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let cell_w = cfg.width as i64 / GRID_COLS as i64;
    let cell_h = cfg.height as i64 / GRID_ROWS as i64;

    let mut images = Vec::with_capacity(cfg.num_images);
    let mut annotations = Vec::new();
    let mut ann_id = 1u64;
    for image_id in 1..=cfg.num_images as u64 {
        images.push(CocoImage {
            id: image_id,
            width: cfg.width,
            height: cfg.height,
            file_name: None,
        });
        let mut rng = per_image_rng(cfg.seed, image_id);
        let n_boxes = rng.random_range(cfg.min_boxes..=cfg.max_boxes);
        let mut cells: Vec<usize> = (0..GRID_COLS * GRID_ROWS).collect();
        cells.shuffle(&mut rng);
        cells.truncate(n_boxes);
        cells.sort_unstable();
        for cell in cells {
            let col = (cell % GRID_COLS) as i64;
            let row = (cell / GRID_COLS) as i64;
            let w = rng.random_range(BOX_W.0..=BOX_W.1);
            let h = rng.random_range(BOX_H.0..=BOX_H.1);
            let x = col * cell_w + MARGIN_X + rng.random_range(0..=cell_w - 2 * MARGIN_X - w);
            let y = row * cell_h + MARGIN_Y + rng.random_range(0..=cell_h - 2 * MARGIN_Y - h);
            let class = rng.random_range(0..cfg.num_classes) as u64;
            annotations.push(CocoAnnotation {
                id: Some(ann_id),
                image_id,
                category_id: class + 1,
                bbox: [x as f64, y as f64, w as f64, h as f64],
            });
            ann_id += 1;
        }
    }
    let categories = (1..=cfg.num_classes as u64)
        .map(|id| CocoCategory {
            id,
            name: Some(format!("class-{id}")),
        })
        .collect();
    let file = CocoAnnotationFile {
        info: None,
        images,
        annotations,
        categories,
    };
    let (dataset, warnings) = dataset_from_coco(&file, &IngestConfig::default())?;
    debug_assert!(warnings.is_empty());
    Ok(dataset)
}

/// Oracle predictor settings: the fixed confidence of every emitted
/// detection and the optional per-corner jitter as a fraction of the box
/// side length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub confidence: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            confidence: 0.99,
            jitter: 0.0,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(Error::Config(format!(
                "oracle confidence must lie in (0, 1], got {}",
                self.confidence
            )));
        }
        if !(0.0..=0.4).contains(&self.jitter) {
            return Err(Error::Config(format!(
                "oracle jitter must lie in [0, 0.4], got {}",
                self.jitter
            )));
        }
        Ok(())
    }
}

/// Turn a dataset's annotations into a synthetic detection list: one
/// detection per annotated box, at the configured confidence, with corners
/// optionally jittered. Detections carry original category ids, so they feed
/// back through the ordinary ingestion path.
pub fn oracle_detections(dataset: &Dataset, cfg: &OracleConfig) -> Result<Vec<CocoDetection>> {
    cfg.validate()?;
    let mut detections = Vec::with_capacity(dataset.total_annotations());
    for img in &dataset.images {
        let mut rng = per_image_rng(cfg.seed, img.image_id);
        for ann in &img.annotations {
            let mut b = ann.bbox;
            if cfg.jitter > 0.0 {
                let jx = cfg.jitter * b.width();
                let jy = cfg.jitter * b.height();
                b.x1 = (b.x1 + rng.random_range(-jx..=jx)).max(0.0);
                b.y1 = (b.y1 + rng.random_range(-jy..=jy)).max(0.0);
                b.x2 = (b.x2 + rng.random_range(-jx..=jx)).min(img.dims.width as f64);
                b.y2 = (b.y2 + rng.random_range(-jy..=jy)).min(img.dims.height as f64);
            }
            detections.push(CocoDetection {
                image_id: img.image_id,
                category_id: dataset.categories.original(ann.class_id),
                bbox: b.to_xywh(),
                score: cfg.confidence,
            });
        }
    }
    Ok(detections)
}
