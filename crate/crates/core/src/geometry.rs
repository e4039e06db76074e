//! Center-based bounding boxes and frame-level IoU.

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box stored as center plus extent, tagged with its frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub frame: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(frame: u32, cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite center ({cx}, {cy})")));
        }
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(Error::InvalidBox(format!("extent must be positive, got {w} x {h}")));
        }
        Ok(Self { frame, cx, cy, w, h })
    }

    /// Builds a box from corner coordinates `(x0, y0)`-`(x1, y1)`.
    pub fn from_corners(frame: u32, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(frame, (x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn at_frame(self, frame: u32) -> Self {
        Self { frame, ..self }
    }

    pub fn translated(self, dx: f64, dy: f64) -> Self {
        Self { cx: self.cx + dx, cy: self.cy + dy, ..self }
    }

    /// Scales width and height about the center.
    pub fn scaled(self, sx: f64, sy: f64) -> Self {
        Self { w: self.w * sx, h: self.h * sy, ..self }
    }

    /// Same center and extent, ignoring the frame index.
    pub fn same_region(&self, other: &BoundingBox) -> bool {
        self.cx == other.cx && self.cy == other.cy && self.w == other.w && self.h == other.h
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.left().max(other.left());
        let ih = self.bottom().min(other.bottom()) - self.top().max(other.top());
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// True when `other` lies inside `self` up to `eps` pixels.
    pub fn contains(&self, other: &BoundingBox, eps: f64) -> bool {
        other.left() >= self.left() - eps
            && other.right() <= self.right() + eps
            && other.top() >= self.top() - eps
            && other.bottom() <= self.bottom() + eps
    }
}

/// Intersection over union of two boxes. Purely spatial: frames are ignored.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a.same_region(b) {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
