//! Label-quality auditing for object-detection datasets.
//!
//! Given per-image annotations and out-of-sample model predictions, this
//! crate scores how likely each image's given label is wrong (the ObjectLab
//! score plus three baseline scores), injects controlled synthetic label
//! errors for benchmarking, and evaluates error detection with retrieval
//! metrics.
//!
//! The usual flow:
//!
//! 1. [`dataset::load_annotations`] and [`dataset::load_predictions`] ingest
//!    COCO-format files into a validated [`dataset::Dataset`].
//! 2. [`objectlab::score_dataset`] (or a scorer from [`baselines`]) produces
//!    per-image quality scores; low scores mean "review this label first".
//! 3. [`inject::inject_errors`] corrupts a clean dataset with dropped,
//!    swapped, and shifted boxes, recording the ground truth in a manifest.
//! 4. [`eval::evaluate`] compares any score file against a manifest with
//!    average precision and precision-at-k.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod inject;
pub mod objectlab;
pub mod report;
pub mod rng;
pub mod synth;

pub use error::{Error, Result, Severity, ValidationIssue};
