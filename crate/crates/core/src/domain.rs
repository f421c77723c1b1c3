//! Geometric and numeric primitives shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("invalid bounding box ({x}, {y}, {w}, {h}): width and height must be positive and finite")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },
    #[error("appearance vector dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("appearance vector must be non-empty with finite, non-zero norm")]
    DegenerateVector,
}

/// Axis-aligned box in pixel coordinates, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl TryFrom<RawBox> for BBox {
    type Error = DomainError;
    fn try_from(r: RawBox) -> Result<Self, Self::Error> {
        BBox::new(r.x, r.y, r.w, r.h)
    }
}

impl From<BBox> for RawBox {
    fn from(b: BBox) -> Self {
        RawBox { x: b.x, y: b.y, w: b.w, h: b.h }
    }
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, DomainError> {
        let finite = x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite();
        if !finite || w <= 0.0 || h <= 0.0 {
            return Err(DomainError::InvalidBox { x, y, w, h });
        }
        Ok(Self { x, y, w, h })
    }

    /// Box spanning two corners; `None` when the span is empty.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Option<Self> {
        Self::new(x0, y0, x1 - x0, y1 - y0).ok()
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn right(&self) -> f64 {
        self.x + self.w
    }
    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x && p.x <= self.right() && p.y >= self.y && p.y <= self.bottom()
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        BBox::from_corners(x0, y0, x1, y1)
    }

    pub fn union_hull(&self, other: &BBox) -> BBox {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        BBox { x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
    }

    /// Centered sub-box covering `fx` of the width and `fy` of the height.
    pub fn central_fraction(&self, fx: f64, fy: f64) -> BBox {
        let w = self.w * fx;
        let h = self.h * fy;
        BBox {
            x: self.x + 0.5 * (self.w - w),
            y: self.y + 0.5 * (self.h - h),
            w,
            h,
        }
    }

    pub fn scaled(&self, sx: f64, sy: f64) -> BBox {
        BBox { x: self.x * sx, y: self.y * sy, w: self.w * sx, h: self.h * sy }
    }

    pub fn expanded(&self, dx: f64, dy: f64) -> BBox {
        BBox { x: self.x - dx, y: self.y - dy, w: self.w + 2.0 * dx, h: self.h + 2.0 * dy }
    }

    pub fn corners(&self) -> [Point2; 4] {
        [
            Point2::new(self.x, self.y),
            Point2::new(self.right(), self.y),
            Point2::new(self.right(), self.bottom()),
            Point2::new(self.x, self.bottom()),
        ]
    }

    /// Bounding box of a point set; `None` when the points span no area.
    pub fn hull_of(points: &[Point2]) -> Option<BBox> {
        let mut it = points.iter();
        let first = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
        for p in it {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        BBox::from_corners(x0, y0, x1, y1)
    }
}

/// Intersection-over-union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0.0, |i| i.area());
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Unit-norm appearance descriptor used for identity matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AppearanceVector(Vec<f64>);

pub const DEFAULT_APPEARANCE_DIM: usize = 32;

impl AppearanceVector {
    /// Normalizes `values` to unit Euclidean norm.
    pub fn new(values: Vec<f64>) -> Result<Self, DomainError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(DomainError::DegenerateVector);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= f64::MIN_POSITIVE {
            return Err(DomainError::DegenerateVector);
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }
}

impl TryFrom<Vec<f64>> for AppearanceVector {
    type Error = DomainError;
    /// Keeps already-unit vectors bit-for-bit so serialized data round-trips
    /// exactly; anything else is normalized.
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if !v.is_empty() && v.iter().all(|x| x.is_finite()) && (norm_sq - 1.0).abs() < 1e-9 {
            return Ok(Self(v));
        }
        Self::new(v)
    }
}

impl From<AppearanceVector> for Vec<f64> {
    fn from(a: AppearanceVector) -> Self {
        a.0
    }
}

/// Cosine similarity of two unit vectors.
pub fn similarity(a: &AppearanceVector, b: &AppearanceVector) -> Result<f64, DomainError> {
    if a.dim() != b.dim() {
        return Err(DomainError::DimensionMismatch(a.dim(), b.dim()));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}
