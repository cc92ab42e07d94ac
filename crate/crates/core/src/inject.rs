//! Controlled synthetic label corruption with a ground-truth manifest:
//! dropped boxes, swapped class labels, and shifted boxes, reproducible from
//! a seed.
//!
//! Each image draws from its own generator derived via
//! [`crate::rng::per_image_rng`], so the corruption of one image never
//! depends on any other image or on processing order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedBox, Dataset};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::rng::per_image_rng;

/// Corruption plan: how many images to perturb and with what.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionSpec {
    /// Probability that an image (with at least one annotation) is selected
    /// for corruption.
    pub image_fraction: f64,
    /// Per-error-type draw probabilities for a selected image. Drawn
    /// independently and re-drawn until at least one type comes up.
    pub drop_prob: f64,
    pub swap_prob: f64,
    pub shift_prob: f64,
    /// Shift magnitude per axis, as a fraction of the box side length.
    pub shift_range: (f64, f64),
    pub seed: u64,
    /// Permit a drop to remove an image's only box.
    pub allow_empty_images: bool,
}

impl Default for InjectionSpec {
    fn default() -> Self {
        InjectionSpec {
            image_fraction: 0.22,
            drop_prob: 1.0 / 3.0,
            swap_prob: 1.0 / 3.0,
            shift_prob: 1.0 / 3.0,
            shift_range: (0.25, 0.5),
            seed: 0,
            allow_empty_images: true,
        }
    }
}

impl InjectionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.image_fraction) {
            return Err(Error::Config(format!(
                "image_fraction must lie in [0, 1], got {}",
                self.image_fraction
            )));
        }
        let probs = [self.drop_prob, self.swap_prob, self.shift_prob];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config(
                "error-type probabilities must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Config(
                "at least one error-type probability must be positive".into(),
            ));
        }
        if sum > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "error-type probabilities must sum to at most 1, got {sum}"
            )));
        }
        let (lo, hi) = self.shift_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!(
                "shift_range must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// What happened to one annotated box, keyed by its index in the clean
/// image. Category ids are original (file) ids, matching the annotation
/// files on both sides of the corruption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ErrorDetail {
    Drop {
        annotation_index: usize,
        category_id: u64,
        bbox: BoundingBox,
    },
    Swap {
        annotation_index: usize,
        old_category_id: u64,
        new_category_id: u64,
    },
    Shift {
        annotation_index: usize,
        old_bbox: BoundingBox,
        new_bbox: BoundingBox,
    },
}

/// Ground-truth corruption record for one image. `overlooked`, `swapped`,
/// and `badloc` flag the drop, swap, and shift perturbations respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: u64,
    pub overlooked: bool,
    pub swapped: bool,
    pub badloc: bool,
    pub details: Vec<ErrorDetail>,
}

impl ManifestEntry {
    pub fn is_flagged(&self) -> bool {
        self.overlooked || self.swapped || self.badloc
    }
}

/// Per-image corruption records covering exactly the dataset's image ids,
/// in image-id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorManifest {
    pub entries: Vec<ManifestEntry>,
}

impl ErrorManifest {
    pub fn flagged_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_flagged()).count()
    }
}

/// Corrupt a clean dataset. Deterministic given `(clean, spec)`: the same
/// inputs produce an identical corrupted dataset and manifest. Predictions
/// on the input are ignored; the output carries none.
pub fn inject_errors(clean: &Dataset, spec: &InjectionSpec) -> Result<(Dataset, ErrorManifest)> {
    spec.validate()?;
    if spec.image_fraction > 0.0 && clean.total_annotations() == 0 {
        return Err(Error::Injection(
            "cannot inject errors into a dataset with no annotated boxes".into(),
        ));
    }
    let num_classes = clean.num_classes();

    let mut corrupted = clean.clone();
    corrupted.clear_predictions();
    let mut entries = Vec::with_capacity(clean.images.len());

    for img in &mut corrupted.images {
        let mut entry = ManifestEntry {
            image_id: img.image_id,
            overlooked: false,
            swapped: false,
            badloc: false,
            details: Vec::new(),
        };
        let eligible = !img.annotations.is_empty();
        if eligible {
            let mut rng = per_image_rng(spec.seed, img.image_id);
            if rng.random::<f64>() < spec.image_fraction {
                // indices into the clean annotation list survive the drop
                let mut working: Vec<(usize, AnnotatedBox)> =
                    img.annotations.iter().copied().enumerate().collect();

                let drop_allowed = spec.allow_empty_images || working.len() >= 2;
                let swap_allowed = num_classes >= 2;
                let effective = (if drop_allowed { spec.drop_prob } else { 0.0 })
                    + (if swap_allowed { spec.swap_prob } else { 0.0 })
                    + spec.shift_prob;
                if effective <= 0.0 {
                    return Err(Error::Injection(format!(
                        "image {}: no applicable error type under this spec \
                         (drop allowed: {drop_allowed}, swap allowed: {swap_allowed})",
                        img.image_id
                    )));
                }
                let (mut do_drop, mut do_swap, mut do_shift);
                loop {
                    do_drop = rng.random::<f64>() < spec.drop_prob && drop_allowed;
                    do_swap = rng.random::<f64>() < spec.swap_prob && swap_allowed;
                    do_shift = rng.random::<f64>() < spec.shift_prob;
                    if do_drop || do_swap || do_shift {
                        break;
                    }
                }

                if do_drop {
                    let victim = rng.random_range(0..working.len());
                    let (index, ann) = working.remove(victim);
                    entry.overlooked = true;
                    entry.details.push(ErrorDetail::Drop {
                        annotation_index: index,
                        category_id: clean.categories.original(ann.class_id),
                        bbox: ann.bbox,
                    });
                }
                if do_swap && !working.is_empty() {
                    let victim = rng.random_range(0..working.len());
                    let (index, ann) = &mut working[victim];
                    let old = ann.class_id;
                    let draw = rng.random_range(0..num_classes - 1);
                    let new = if draw >= old { draw + 1 } else { draw };
                    ann.class_id = new;
                    entry.swapped = true;
                    entry.details.push(ErrorDetail::Swap {
                        annotation_index: *index,
                        old_category_id: clean.categories.original(old),
                        new_category_id: clean.categories.original(new),
                    });
                }
                if do_shift && !working.is_empty() {
                    let victim = rng.random_range(0..working.len());
                    let (index, ann) = &mut working[victim];
                    let old = ann.bbox;
                    let (lo, hi) = spec.shift_range;
                    let ux: f64 = rng.random_range(lo..=hi);
                    let uy: f64 = rng.random_range(lo..=hi);
                    let sign_x = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let sign_y = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let new = shift_box(
                        &old,
                        sign_x * ux * old.width(),
                        sign_y * uy * old.height(),
                        img.dims.width as f64,
                        img.dims.height as f64,
                    );
                    ann.bbox = new;
                    entry.badloc = true;
                    entry.details.push(ErrorDetail::Shift {
                        annotation_index: *index,
                        old_bbox: old,
                        new_bbox: new,
                    });
                }

                img.annotations = working.into_iter().map(|(_, ann)| ann).collect();
            }
        }
        entries.push(entry);
    }

    Ok((corrupted, ErrorManifest { entries }))
}

/// Translate a box and clip it to the image, always keeping positive area.
/// The translation is clamped so that at least a sliver of the box stays
/// inside; a box spanning the whole image along an axis cannot move there.
fn shift_box(b: &BoundingBox, dx: f64, dy: f64, w: f64, h: f64) -> BoundingBox {
    let keep_x = 1.0f64.min(b.width() / 2.0);
    let keep_y = 1.0f64.min(b.height() / 2.0);
    let dx = dx.clamp(-(b.x2 - keep_x), w - b.x1 - keep_x);
    let dy = dy.clamp(-(b.y2 - keep_y), h - b.y1 - keep_y);
    BoundingBox {
        x1: (b.x1 + dx).max(0.0),
        y1: (b.y1 + dy).max(0.0),
        x2: (b.x2 + dx).min(w),
        y2: (b.y2 + dy).min(h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::coco::CocoAnnotationFile;
    use crate::dataset::{dataset_from_coco, IngestConfig};
    use serde_json::json;

    fn toy_dataset(num_images: usize, num_classes: usize) -> Dataset {
        let images: Vec<_> = (1..=num_images as u64)
            .map(|id| json!({"id": id, "width": 100, "height": 100}))
            .collect();
        let mut annotations = Vec::new();
        let mut ann_id = 1;
        for id in 1..=num_images as u64 {
            let n = 1 + (id as usize % 3);
            for k in 0..n {
                annotations.push(json!({
                    "id": ann_id,
                    "image_id": id,
                    "category_id": 1 + (k % num_classes) as u64,
                    "bbox": [5.0 + 30.0 * k as f64, 10.0, 20.0, 20.0]
                }));
                ann_id += 1;
            }
        }
        let categories: Vec<_> = (1..=num_classes as u64)
            .map(|id| json!({"id": id, "name": format!("c{id}")}))
            .collect();
        let file: CocoAnnotationFile = serde_json::from_value(json!({
            "images": images,
            "annotations": annotations,
            "categories": categories,
        }))
        .unwrap();
        dataset_from_coco(&file, &IngestConfig::default())
            .unwrap()
            .0
    }

    #[test]
    fn zero_fraction_is_identity() {
        let clean = toy_dataset(20, 3);
        let spec = InjectionSpec {
            image_fraction: 0.0,
            ..InjectionSpec::default()
        };
        let (corrupted, manifest) = inject_errors(&clean, &spec).unwrap();
        assert_eq!(corrupted, clean);
        assert!(manifest.entries.iter().all(|e| !e.is_flagged()));
        assert_eq!(manifest.entries.len(), clean.images.len());
    }

    #[test]
    fn two_class_swap_is_forced_to_the_other_class() {
        let clean = toy_dataset(30, 2);
        let spec = InjectionSpec {
            image_fraction: 1.0,
            drop_prob: 0.0,
            swap_prob: 1.0,
            shift_prob: 0.0,
            ..InjectionSpec::default()
        };
        let (corrupted, manifest) = inject_errors(&clean, &spec).unwrap();
        let mut swaps = 0;
        for (entry, img) in manifest.entries.iter().zip(corrupted.images.iter()) {
            assert!(entry.swapped);
            for d in &entry.details {
                if let ErrorDetail::Swap {
                    annotation_index,
                    old_category_id,
                    new_category_id,
                } = d
                {
                    swaps += 1;
                    // K=2 with original ids {1, 2}: the swap is forced
                    assert_eq!(*new_category_id, 3 - *old_category_id);
                    assert_eq!(
                        corrupted
                            .categories
                            .original(img.annotations[*annotation_index].class_id),
                        *new_category_id
                    );
                }
            }
        }
        assert_eq!(swaps, 30);
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let clean = toy_dataset(50, 3);
        let spec = InjectionSpec {
            seed: 11,
            ..InjectionSpec::default()
        };
        let (c1, m1) = inject_errors(&clean, &spec).unwrap();
        let (c2, m2) = inject_errors(&clean, &spec).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(m1, m2);

        let other = InjectionSpec { seed: 12, ..spec };
        let (_, m3) = inject_errors(&clean, &other).unwrap();
        assert_ne!(m1, m3);
    }

    #[test]
    fn unflagged_images_are_untouched() {
        let clean = toy_dataset(60, 3);
        let spec = InjectionSpec {
            seed: 5,
            ..InjectionSpec::default()
        };
        let (corrupted, manifest) = inject_errors(&clean, &spec).unwrap();
        for (entry, (before, after)) in manifest
            .entries
            .iter()
            .zip(clean.images.iter().zip(corrupted.images.iter()))
        {
            if !entry.is_flagged() {
                assert_eq!(before.annotations, after.annotations);
                assert!(entry.details.is_empty());
            } else {
                assert!(!entry.details.is_empty());
            }
        }
    }

    #[test]
    fn shifted_boxes_stay_valid_and_inside() {
        let clean = toy_dataset(80, 3);
        let spec = InjectionSpec {
            image_fraction: 1.0,
            drop_prob: 0.0,
            swap_prob: 0.0,
            shift_prob: 1.0,
            seed: 9,
            ..InjectionSpec::default()
        };
        let (corrupted, manifest) = inject_errors(&clean, &spec).unwrap();
        for (entry, img) in manifest.entries.iter().zip(corrupted.images.iter()) {
            assert!(entry.badloc);
            for ann in &img.annotations {
                assert!(ann.bbox.x1 < ann.bbox.x2 && ann.bbox.y1 < ann.bbox.y2);
                assert!(ann.bbox.within(img.dims));
            }
            for d in &entry.details {
                if let ErrorDetail::Shift {
                    old_bbox, new_bbox, ..
                } = d
                {
                    assert_ne!(old_bbox, new_bbox);
                }
            }
        }
    }

    #[test]
    fn selection_rate_tracks_the_fraction() {
        let clean = toy_dataset(1000, 3);
        let spec = InjectionSpec {
            seed: 4242,
            ..InjectionSpec::default()
        };
        let (_, manifest) = inject_errors(&clean, &spec).unwrap();
        let flagged = manifest.flagged_count();
        // binomial(1000, 0.22) stays within these bounds with overwhelming margin
        assert!(
            (190..=250).contains(&flagged),
            "flagged {flagged} images, expected around 220"
        );
    }

    #[test]
    fn selection_rate_converges_across_a_seed_family() {
        // binomial(4000, 0.22): sd ~ 0.0066 on the rate, so 0.03 is ~4.5 sd
        let clean = toy_dataset(4000, 3);
        for seed in [1, 2, 3] {
            let spec = InjectionSpec {
                seed,
                ..InjectionSpec::default()
            };
            let (_, manifest) = inject_errors(&clean, &spec).unwrap();
            let rate = manifest.flagged_count() as f64 / clean.images.len() as f64;
            assert!(
                (rate - 0.22).abs() < 0.03,
                "seed {seed}: flagged rate {rate}"
            );
        }
    }

    #[test]
    fn empty_dataset_with_positive_fraction_is_an_error() {
        let mut clean = toy_dataset(5, 3);
        for img in &mut clean.images {
            img.annotations.clear();
        }
        assert!(inject_errors(&clean, &InjectionSpec::default()).is_err());
    }

    #[test]
    fn single_box_drop_respects_the_empty_image_flag() {
        let mut clean = toy_dataset(40, 3);
        for img in &mut clean.images {
            img.annotations.truncate(1);
        }
        let spec = InjectionSpec {
            image_fraction: 1.0,
            drop_prob: 0.5,
            swap_prob: 0.0,
            shift_prob: 0.5,
            allow_empty_images: false,
            seed: 3,
            ..InjectionSpec::default()
        };
        let (corrupted, manifest) = inject_errors(&clean, &spec).unwrap();
        for (entry, img) in manifest.entries.iter().zip(corrupted.images.iter()) {
            assert!(!entry.overlooked, "drop applied to a sole box");
            assert!(entry.badloc);
            assert_eq!(img.annotations.len(), 1);
        }

        let permissive = InjectionSpec {
            drop_prob: 1.0,
            shift_prob: 0.0,
            allow_empty_images: true,
            ..spec
        };
        let (corrupted, manifest) = inject_errors(&clean, &permissive).unwrap();
        for (entry, img) in manifest.entries.iter().zip(corrupted.images.iter()) {
            assert!(entry.overlooked);
            assert!(img.annotations.is_empty());
        }

        // only drops requested but drops forbidden on sole boxes: rejected
        let impossible = InjectionSpec {
            drop_prob: 1.0,
            shift_prob: 0.0,
            allow_empty_images: false,
            ..spec
        };
        assert!(inject_errors(&clean, &impossible).is_err());
    }
}
