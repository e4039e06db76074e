//! Detections, their feature histograms, and per-video frame storage.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::math::l2_distance;

/// Non-negative, L1-normalized feature vector (HOF, HOC or HOG style).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureHistogram(Vec<f64>);

impl FeatureHistogram {
    /// Validates and L1-normalizes `values`.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidHistogram("empty histogram".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidHistogram(format!("entry {bad} is negative or non-finite")));
        }
        let sum: f64 = values.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidHistogram("histogram has zero mass".into()));
        }
        Ok(Self(values.into_iter().map(|v| v / sum).collect()))
    }

    /// Uniform histogram of dimension `dim`.
    pub fn uniform(dim: usize) -> Self {
        assert!(dim > 0, "histogram dimension must be positive");
        Self(alloc::vec![1.0 / dim as f64; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn l2_distance(&self, other: &FeatureHistogram) -> f64 {
        l2_distance(&self.0, &other.0)
    }
}

impl AsRef<[f64]> for FeatureHistogram {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureHistogram {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::normalized(values)
    }
}

impl From<FeatureHistogram> for Vec<f64> {
    fn from(h: FeatureHistogram) -> Self {
        h.0
    }
}

/// One scored box on one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    /// Detector confidence that the box holds a person.
    pub human_score: f64,
    pub motion_hist: FeatureHistogram,
    pub color_hist: FeatureHistogram,
    pub grad_hist: FeatureHistogram,
    /// Filled in by [`crate::actionness::score_video`].
    pub actionness: Option<f64>,
    /// Displacement of the box content to the next frame, if known.
    pub shift: Option<(f64, f64)>,
}

impl Detection {
    pub fn new(
        bbox: BoundingBox,
        human_score: f64,
        motion_hist: FeatureHistogram,
        color_hist: FeatureHistogram,
        grad_hist: FeatureHistogram,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&human_score) {
            return Err(Error::HumanScoreOutOfRange(human_score));
        }
        Ok(Self { bbox, human_score, motion_hist, color_hist, grad_hist, actionness: None, shift: None })
    }

    pub fn with_shift(mut self, dx: f64, dy: f64) -> Self {
        self.shift = Some((dx, dy));
        self
    }

    pub fn frame(&self) -> u32 {
        self.bbox.frame
    }

    /// Concatenated color and gradient histograms.
    pub fn appearance(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.color_hist.dim() + self.grad_hist.dim());
        v.extend_from_slice(self.color_hist.as_slice());
        v.extend_from_slice(self.grad_hist.as_slice());
        v
    }
}

/// Identity of a detection record inside a [`Video`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DetectionRef {
    pub frame: u32,
    pub index: u32,
}

/// All detections of one video, grouped by frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Video {
    pub id: String,
    pub frames: Vec<Vec<Detection>>,
}

impl Video {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), frames: Vec::new() }
    }

    /// Ensures frames `0..count` exist.
    pub fn with_frame_count(mut self, count: usize) -> Self {
        if self.frames.len() < count {
            self.frames.resize_with(count, Vec::new);
        }
        self
    }

    /// Appends a detection to its frame and returns its identity.
    pub fn push(&mut self, detection: Detection) -> DetectionRef {
        let frame = detection.frame();
        let slot = frame as usize;
        if self.frames.len() <= slot {
            self.frames.resize_with(slot + 1, Vec::new);
        }
        self.frames[slot].push(detection);
        DetectionRef { frame, index: (self.frames[slot].len() - 1) as u32 }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn detection_count(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn get(&self, id: DetectionRef) -> Option<&Detection> {
        self.frames.get(id.frame as usize)?.get(id.index as usize)
    }

    pub fn detections(&self) -> impl Iterator<Item = (DetectionRef, &Detection)> {
        self.frames.iter().enumerate().flat_map(|(f, dets)| {
            dets.iter().enumerate().map(move |(i, d)| (DetectionRef { frame: f as u32, index: i as u32 }, d))
        })
    }

    /// Actionness of a detection, or an error if scoring has not run.
    pub fn actionness(&self, id: DetectionRef) -> Result<f64> {
        self.get(id).and_then(|d| d.actionness).ok_or(Error::MissingActionness { frame: id.frame, index: id.index })
    }

    /// `(color_dim, grad_dim)` of the first detection, if any.
    pub fn appearance_dims(&self) -> Option<(usize, usize)> {
        self.frames.iter().flatten().next().map(|d| (d.color_hist.dim(), d.grad_hist.dim()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn histogram_is_renormalized() {
        let h = FeatureHistogram::normalized(vec![0.5, 1.0, 0.5]).unwrap();
        let sum: f64 = h.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(h.as_slice(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn histogram_rejects_bad_entries() {
        assert!(FeatureHistogram::normalized(vec![]).is_err());
        assert!(FeatureHistogram::normalized(vec![0.0, 0.0]).is_err());
        assert!(FeatureHistogram::normalized(vec![1.0, -0.1]).is_err());
        assert!(FeatureHistogram::normalized(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn human_score_range_checked() {
        let b = BoundingBox::new(0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let h = FeatureHistogram::uniform(2);
        assert!(Detection::new(b, 1.2, h.clone(), h.clone(), h.clone()).is_err());
        assert!(Detection::new(b, -0.1, h.clone(), h.clone(), h.clone()).is_err());
        assert!(Detection::new(b, 1.0, h.clone(), h.clone(), h).is_ok());
    }

    #[test]
    fn video_push_groups_by_frame() {
        let h = FeatureHistogram::uniform(2);
        let mut v = Video::new("v");
        for frame in [2, 0, 2] {
            let b = BoundingBox::new(frame, 0.0, 0.0, 1.0, 1.0).unwrap();
            v.push(Detection::new(b, 0.5, h.clone(), h.clone(), h.clone()).unwrap());
        }
        assert_eq!(v.frame_count(), 3);
        assert_eq!(v.frames[1].len(), 0);
        assert_eq!(v.frames[2].len(), 2);
        assert_eq!(v.detection_count(), 3);
        let ids: Vec<_> = v.detections().map(|(id, _)| (id.frame, id.index)).collect();
        assert_eq!(ids, vec![(0, 0), (2, 0), (2, 1)]);
    }
}
