//! Bounding-box primitives: IoU, normalized corner vectors, kernel similarity,
//! and the composite box-similarity function used by every scorer.
//!
//! All operations here are pure functions of their arguments and safe to call
//! concurrently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates: top-left corner `(x1, y1)`,
/// bottom-right corner `(x2, y2)`. Valid boxes have strictly positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    /// Build a box from its corners, rejecting non-finite coordinates and
    /// zero or negative area.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|c| c.is_finite()) {
            return Err(Error::Config(format!(
                "box coordinates must be finite, got ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::Config(format!(
                "box must have positive area, got ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    /// Build from COCO `[x, y, width, height]` order.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        BoundingBox::new(x, y, x + w, y + h)
    }

    /// Corners back to COCO `[x, y, width, height]` order.
    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2 - self.x1, self.y2 - self.y1]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Area of the overlap with `other`; zero when disjoint.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Restrict the box to the image rectangle `[0, W] x [0, H]`.
    /// Returns `None` when nothing with positive area remains.
    pub fn clip(&self, dims: ImageDims) -> Option<BoundingBox> {
        let x1 = self.x1.max(0.0);
        let y1 = self.y1.max(0.0);
        let x2 = self.x2.min(dims.width as f64);
        let y2 = self.y2.min(dims.height as f64);
        if x1 < x2 && y1 < y2 {
            Some(BoundingBox { x1, y1, x2, y2 })
        } else {
            None
        }
    }

    /// True when the box already lies inside the image rectangle.
    pub fn within(&self, dims: ImageDims) -> bool {
        self.x1 >= 0.0
            && self.y1 >= 0.0
            && self.x2 <= dims.width as f64
            && self.y2 <= dims.height as f64
    }
}

/// Image width and height in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

impl ImageDims {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "image dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(ImageDims { width, height })
    }
}

/// Weights for the composite box similarity: `alpha` blends the corner-kernel
/// term against IoU, `sigma` is the kernel bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityParams {
    pub alpha: f64,
    pub sigma: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams {
            alpha: 0.1,
            sigma: 0.1,
        }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "similarity alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.sigma <= 0.0 || !self.sigma.is_finite() {
            return Err(Error::Config(format!(
                "similarity sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Intersection over union of two boxes; 0 when disjoint, 1 when identical.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter / union
}

/// Box corners normalized to the unit interval: `(x1/W, y1/H, x2/W, y2/H)`.
pub fn corner_vector(b: &BoundingBox, dims: ImageDims) -> [f64; 4] {
    let w = dims.width as f64;
    let h = dims.height as f64;
    [b.x1 / w, b.y1 / h, b.x2 / w, b.y2 / h]
}

/// Kernel similarity of the normalized corner vectors:
/// `exp(-||v_a - v_b|| / sigma)` with the Euclidean norm (not its square).
/// Equals 1 exactly for identical boxes and stays strictly positive otherwise.
pub fn gaussian_kernel(a: &BoundingBox, b: &BoundingBox, dims: ImageDims, sigma: f64) -> f64 {
    let va = corner_vector(a, dims);
    let vb = corner_vector(b, dims);
    let dist = va
        .iter()
        .zip(vb.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    (-dist / sigma).exp()
}

/// Composite similarity `alpha * kernel + (1 - alpha) * IoU`. The kernel term
/// keeps the value strictly positive so disjoint pairs do not tie at zero.
pub fn similarity(
    a: &BoundingBox,
    b: &BoundingBox,
    dims: ImageDims,
    params: &SimilarityParams,
) -> f64 {
    params.alpha * gaussian_kernel(a, b, dims, params.sigma) + (1.0 - params.alpha) * iou(a, b)
}
