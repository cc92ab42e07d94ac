//! Data model and ingestion: COCO annotation / detection-results parsing,
//! validation, confidence filtering, and the dataset-wide minimum pair
//! similarity statistic.
//!
//! Category ids from input files ("original" ids, which are usually sparse)
//! are remapped to dense `0..K` internal ids; the mapping is retained so every
//! output file speaks original ids again.

pub mod coco;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationIssue};
use crate::geometry::{similarity, BoundingBox, ImageDims, SimilarityParams};
use coco::{CocoAnnotation, CocoAnnotationFile, CocoCategory, CocoDetection, CocoImage};

/// An annotated box: geometry plus its given class label (dense id).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedBox {
    pub bbox: BoundingBox,
    pub class_id: usize,
}

/// A model-predicted box: geometry, predicted class (dense id), confidence.
/// After ingestion every retained prediction has `confidence > tau_down`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedBox {
    pub bbox: BoundingBox,
    pub class_id: usize,
    pub confidence: f64,
}

/// One image: its given label (annotation set) and its prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: u64,
    pub dims: ImageDims,
    pub annotations: Vec<AnnotatedBox>,
    pub predictions: Vec<PredictedBox>,
}

/// Bijection between original (file) category ids and dense internal ids.
/// Dense ids are assigned by ascending original id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMap {
    originals: Vec<u64>,
    names: Vec<Option<String>>,
}

impl CategoryMap {
    pub fn from_categories(categories: &[CocoCategory]) -> Result<Self> {
        let mut sorted: Vec<&CocoCategory> = categories.iter().collect();
        sorted.sort_by_key(|c| c.id);
        sorted.dedup_by_key(|c| c.id);
        if sorted.len() != categories.len() {
            return Err(Error::validation(vec![ValidationIssue::error(
                None,
                "duplicate category ids in categories list".to_string(),
            )]));
        }
        Ok(CategoryMap {
            originals: sorted.iter().map(|c| c.id).collect(),
            names: sorted.iter().map(|c| c.name.clone()).collect(),
        })
    }

    /// Number of classes K.
    pub fn len(&self) -> usize {
        self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.originals.is_empty()
    }

    /// Dense id for an original category id, if known.
    pub fn dense(&self, original: u64) -> Option<usize> {
        self.originals.binary_search(&original).ok()
    }

    /// Original category id for a dense id.
    pub fn original(&self, dense: usize) -> u64 {
        self.originals[dense]
    }

    pub fn name(&self, dense: usize) -> Option<&str> {
        self.names[dense].as_deref()
    }
}

/// Ingestion settings: the confidence floor and the out-of-bounds policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Predictions with confidence less than or equal to this are discarded.
    pub tau_down: f64,
    /// Clip boxes that spill past the image bounds (with a warning record)
    /// instead of rejecting them.
    pub clip_boxes: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            tau_down: 0.5,
            clip_boxes: true,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau_down) {
            return Err(Error::Config(format!(
                "tau_down must lie in [0, 1), got {}",
                self.tau_down
            )));
        }
        Ok(())
    }
}

/// A full dataset: images ordered by id, plus the category mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    pub categories: CategoryMap,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.categories.len()
    }

    pub fn image(&self, image_id: u64) -> Option<&ImageRecord> {
        self.images
            .binary_search_by_key(&image_id, |img| img.image_id)
            .ok()
            .map(|i| &self.images[i])
    }

    pub fn total_annotations(&self) -> usize {
        self.images.iter().map(|i| i.annotations.len()).sum()
    }

    pub fn clear_predictions(&mut self) {
        for img in &mut self.images {
            img.predictions.clear();
        }
    }

    /// Minimum similarity over all within-image (annotated, predicted) pairs
    /// across the whole dataset. Pairs are never formed across images.
    /// Returns 0 when no image has both an annotation and a prediction.
    pub fn min_similarity(&self, params: &SimilarityParams) -> f64 {
        let min = self
            .images
            .par_iter()
            .map(|img| {
                let mut m = f64::INFINITY;
                for ann in &img.annotations {
                    for pred in &img.predictions {
                        let s = similarity(&ann.bbox, &pred.bbox, img.dims, params);
                        if s < m {
                            m = s;
                        }
                    }
                }
                m
            })
            .reduce(|| f64::INFINITY, f64::min);
        if min.is_finite() {
            min
        } else {
            0.0
        }
    }

    /// Validate, clip, and attach detections, discarding those with
    /// confidence `<= tau_down` (the retained set is "confidence exceeds
    /// the floor", strictly). Images absent from `detections` keep empty
    /// prediction sets. Returns clipping warnings; all validation errors
    /// are collected and returned together.
    pub fn attach_detections(
        &mut self,
        detections: &[CocoDetection],
        cfg: &IngestConfig,
    ) -> Result<Vec<ValidationIssue>> {
        cfg.validate()?;
        let mut issues: Vec<ValidationIssue> = Vec::new();
        let mut warnings: Vec<ValidationIssue> = Vec::new();
        let index: BTreeMap<u64, usize> = self
            .images
            .iter()
            .enumerate()
            .map(|(i, img)| (img.image_id, i))
            .collect();

        self.clear_predictions();
        for det in detections {
            let Some(&slot) = index.get(&det.image_id) else {
                issues.push(ValidationIssue::error(
                    Some(det.image_id),
                    "detection references unknown image_id".to_string(),
                ));
                continue;
            };
            let Some(class_id) = self.categories.dense(det.category_id) else {
                issues.push(ValidationIssue::error(
                    Some(det.image_id),
                    format!(
                        "detection references unknown category_id {}",
                        det.category_id
                    ),
                ));
                continue;
            };
            if !(0.0..=1.0).contains(&det.score) || !det.score.is_finite() {
                issues.push(ValidationIssue::error(
                    Some(det.image_id),
                    format!("detection score {} outside [0, 1]", det.score),
                ));
                continue;
            }
            let [x, y, w, h] = det.bbox;
            let bbox = match BoundingBox::from_xywh(x, y, w, h) {
                Ok(b) => b,
                Err(_) => {
                    issues.push(ValidationIssue::error(
                        Some(det.image_id),
                        format!("detection bbox [{x}, {y}, {w}, {h}] has no positive area"),
                    ));
                    continue;
                }
            };
            let dims = self.images[slot].dims;
            let bbox = match fit_box(bbox, dims, det.image_id, cfg, &mut warnings, &mut issues) {
                Some(b) => b,
                None => continue,
            };
            // tau filter is strict: score equal to the floor is discarded
            if det.score > cfg.tau_down {
                self.images[slot].predictions.push(PredictedBox {
                    bbox,
                    class_id,
                    confidence: det.score,
                });
            }
        }
        if issues
            .iter()
            .any(|i| matches!(i.severity, crate::error::Severity::Error))
        {
            return Err(Error::validation(issues));
        }
        Ok(warnings)
    }
}

/// Clip or reject an out-of-bounds box according to the ingest policy.
fn fit_box(
    bbox: BoundingBox,
    dims: ImageDims,
    image_id: u64,
    cfg: &IngestConfig,
    warnings: &mut Vec<ValidationIssue>,
    issues: &mut Vec<ValidationIssue>,
) -> Option<BoundingBox> {
    if bbox.within(dims) {
        return Some(bbox);
    }
    if !cfg.clip_boxes {
        issues.push(ValidationIssue::error(
            Some(image_id),
            format!(
                "box ({}, {}, {}, {}) extends past image bounds {}x{}",
                bbox.x1, bbox.y1, bbox.x2, bbox.y2, dims.width, dims.height
            ),
        ));
        return None;
    }
    match bbox.clip(dims) {
        Some(clipped) => {
            warnings.push(ValidationIssue::warning(
                Some(image_id),
                format!(
                    "box ({}, {}, {}, {}) clipped to image bounds {}x{}",
                    bbox.x1, bbox.y1, bbox.x2, bbox.y2, dims.width, dims.height
                ),
            ));
            Some(clipped)
        }
        None => {
            issues.push(ValidationIssue::error(
                Some(image_id),
                format!(
                    "box ({}, {}, {}, {}) lies entirely outside image bounds {}x{}",
                    bbox.x1, bbox.y1, bbox.x2, bbox.y2, dims.width, dims.height
                ),
            ));
            None
        }
    }
}

/// Build a dataset from an in-memory COCO annotation structure.
/// Image order is deterministic (ascending image_id); all validation errors
/// are collected and reported together.
pub fn dataset_from_coco(
    file: &CocoAnnotationFile,
    cfg: &IngestConfig,
) -> Result<(Dataset, Vec<ValidationIssue>)> {
    cfg.validate()?;
    let mut issues: Vec<ValidationIssue> = Vec::new();
    let mut warnings: Vec<ValidationIssue> = Vec::new();

    let categories = CategoryMap::from_categories(&file.categories)?;

    let mut images: Vec<ImageRecord> = Vec::with_capacity(file.images.len());
    let mut seen: BTreeMap<u64, ()> = BTreeMap::new();
    for img in &file.images {
        if seen.insert(img.id, ()).is_some() {
            issues.push(ValidationIssue::error(
                Some(img.id),
                "duplicate image id".to_string(),
            ));
            continue;
        }
        match ImageDims::new(img.width, img.height) {
            Ok(dims) => images.push(ImageRecord {
                image_id: img.id,
                dims,
                annotations: Vec::new(),
                predictions: Vec::new(),
            }),
            Err(_) => issues.push(ValidationIssue::error(
                Some(img.id),
                format!("image dimensions {}x{} invalid", img.width, img.height),
            )),
        }
    }
    images.sort_by_key(|img| img.image_id);
    let index: BTreeMap<u64, usize> = images
        .iter()
        .enumerate()
        .map(|(i, img)| (img.image_id, i))
        .collect();

    for ann in &file.annotations {
        let Some(&slot) = index.get(&ann.image_id) else {
            issues.push(ValidationIssue::error(
                Some(ann.image_id),
                "annotation references unknown image_id".to_string(),
            ));
            continue;
        };
        let Some(class_id) = categories.dense(ann.category_id) else {
            issues.push(ValidationIssue::error(
                Some(ann.image_id),
                format!(
                    "annotation references unknown category_id {}",
                    ann.category_id
                ),
            ));
            continue;
        };
        let [x, y, w, h] = ann.bbox;
        let bbox = match BoundingBox::from_xywh(x, y, w, h) {
            Ok(b) => b,
            Err(_) => {
                issues.push(ValidationIssue::error(
                    Some(ann.image_id),
                    format!("annotation bbox [{x}, {y}, {w}, {h}] has no positive area"),
                ));
                continue;
            }
        };
        let dims = images[slot].dims;
        if let Some(bbox) = fit_box(bbox, dims, ann.image_id, cfg, &mut warnings, &mut issues) {
            images[slot]
                .annotations
                .push(AnnotatedBox { bbox, class_id });
        }
    }

    if !issues.is_empty() {
        return Err(Error::validation(issues));
    }
    Ok((Dataset { images, categories }, warnings))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut buf = serde_json::to_vec(value).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    buf.push(b'\n');
    let mut file = fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(&buf).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load a COCO annotation file. Predictions are left empty.
pub fn load_annotations(
    path: &Path,
    cfg: &IngestConfig,
) -> Result<(Dataset, Vec<ValidationIssue>)> {
    let file: CocoAnnotationFile = read_json(path)?;
    dataset_from_coco(&file, cfg)
}

/// Parse a detection-results file: either a plain COCO flat array of
/// detections, or the `{"info": ..., "detections": [...]}` object this tool
/// writes when it needs to carry provenance.
pub fn read_detections(path: &Path) -> Result<Vec<CocoDetection>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum DetectionsFile {
        Flat(Vec<CocoDetection>),
        WithInfo { detections: Vec<CocoDetection> },
    }
    match read_json(path)? {
        DetectionsFile::Flat(detections) => Ok(detections),
        DetectionsFile::WithInfo { detections } => Ok(detections),
    }
}

/// Load a detection-results file and attach its predictions to `dataset`.
pub fn load_predictions(
    path: &Path,
    dataset: &mut Dataset,
    cfg: &IngestConfig,
) -> Result<Vec<ValidationIssue>> {
    let detections = read_detections(path)?;
    dataset.attach_detections(&detections, cfg)
}

/// Project a dataset back into COCO annotation structures, with original
/// category ids and sequential annotation ids.
pub fn annotations_to_coco(
    dataset: &Dataset,
    info: Option<serde_json::Value>,
) -> CocoAnnotationFile {
    let images = dataset
        .images
        .iter()
        .map(|img| CocoImage {
            id: img.image_id,
            width: img.dims.width,
            height: img.dims.height,
            file_name: None,
        })
        .collect();
    let mut annotations = Vec::with_capacity(dataset.total_annotations());
    let mut next_id = 1u64;
    for img in &dataset.images {
        for ann in &img.annotations {
            annotations.push(CocoAnnotation {
                id: Some(next_id),
                image_id: img.image_id,
                category_id: dataset.categories.original(ann.class_id),
                bbox: ann.bbox.to_xywh(),
            });
            next_id += 1;
        }
    }
    let categories = (0..dataset.num_classes())
        .map(|dense| CocoCategory {
            id: dataset.categories.original(dense),
            name: dataset.categories.name(dense).map(str::to_owned),
        })
        .collect();
    CocoAnnotationFile {
        info,
        images,
        annotations,
        categories,
    }
}

/// Write a dataset as a COCO annotation file.
pub fn write_annotations(
    dataset: &Dataset,
    path: &Path,
    info: Option<serde_json::Value>,
) -> Result<()> {
    write_json(&annotations_to_coco(dataset, info), path)
}

/// Write a COCO detection-results file (flat array).
pub fn write_detections(detections: &[CocoDetection], path: &Path) -> Result<()> {
    write_json(&detections.to_vec(), path)
}

/// Write detections wrapped with a provenance header.
pub fn write_detections_with_info(
    detections: &[CocoDetection],
    info: &serde_json::Value,
    path: &Path,
) -> Result<()> {
    #[derive(Serialize)]
    struct DetectionsFile<'a> {
        info: &'a serde_json::Value,
        detections: &'a [CocoDetection],
    }
    write_json(&DetectionsFile { info, detections }, path)
}
