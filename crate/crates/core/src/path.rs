//! Temporally contiguous action paths and the path-overlap measure.

use alloc::format;
use alloc::vec::Vec;

use crate::detection::{DetectionRef, Video};
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};

/// One member box of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathNode {
    pub id: DetectionRef,
    pub bbox: BoundingBox,
    pub actionness: f64,
}

/// A chain of boxes covering every frame in `[start_frame, end_frame]`.
///
/// The score is the left-to-right sum of member actionness, which is the same
/// summation order the forward search uses.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPath {
    nodes: Vec<PathNode>,
    score: f64,
    color_center: Vec<f64>,
    grad_center: Vec<f64>,
}

impl ActionPath {
    /// Builds a path from detection identities in frame order.
    pub fn from_refs(video: &Video, ids: &[DetectionRef]) -> Result<Self> {
        let first = ids.first().ok_or(Error::InvalidPath("empty path".into()))?;
        let mut nodes = Vec::with_capacity(ids.len());
        let mut score = 0.0;
        let mut color_center: Vec<f64> = Vec::new();
        let mut grad_center: Vec<f64> = Vec::new();
        for (offset, &id) in ids.iter().enumerate() {
            if id.frame != first.frame + offset as u32 {
                return Err(Error::InvalidPath(format!(
                    "frame {} follows frame {}; paths must be contiguous",
                    id.frame,
                    first.frame + offset as u32 - 1
                )));
            }
            let det = video
                .get(id)
                .ok_or_else(|| Error::InvalidPath(format!("unknown detection {}:{}", id.frame, id.index)))?;
            let actionness = video.actionness(id)?;
            score += actionness;
            accumulate(&mut color_center, det.color_hist.as_slice());
            accumulate(&mut grad_center, det.grad_hist.as_slice());
            nodes.push(PathNode { id, bbox: det.bbox, actionness });
        }
        let n = nodes.len() as f64;
        color_center.iter_mut().for_each(|v| *v /= n);
        grad_center.iter_mut().for_each(|v| *v /= n);
        Ok(Self { nodes, score, color_center, grad_center })
    }

    pub fn nodes(&self) -> &[PathNode] {
        &self.nodes
    }

    pub fn start_frame(&self) -> u32 {
        self.nodes[0].id.frame
    }

    pub fn end_frame(&self) -> u32 {
        self.nodes[self.nodes.len() - 1].id.frame
    }

    /// Number of frames covered.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Accumulated actionness `tau`.
    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn tail(&self) -> DetectionRef {
        self.nodes[self.nodes.len() - 1].id
    }

    pub fn ids(&self) -> impl Iterator<Item = DetectionRef> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn box_at(&self, frame: u32) -> Option<&BoundingBox> {
        let offset = frame.checked_sub(self.start_frame())? as usize;
        self.nodes.get(offset).map(|n| &n.bbox)
    }

    /// Mean color histogram of the member boxes.
    pub fn color_center(&self) -> &[f64] {
        &self.color_center
    }

    /// Mean gradient histogram of the member boxes.
    pub fn grad_center(&self) -> &[f64] {
        &self.grad_center
    }
}

fn accumulate(acc: &mut Vec<f64>, values: &[f64]) {
    if acc.is_empty() {
        acc.extend_from_slice(values);
    } else {
        acc.iter_mut().zip(values).for_each(|(a, v)| *a += v);
    }
}

/// Temporal overlap of two paths: summed per-frame IoU over the shared span,
/// divided by `max(end) - min(start)`, clamped to `[0, 1]`.
///
/// The normalizer is a frame-index span, so identical paths of `L > 1` frames
/// score `L / (L - 1)` before clamping. Two single-frame paths on the same
/// frame return their box IoU.
pub fn path_overlap(p: &ActionPath, q: &ActionPath) -> f64 {
    let lo = p.start_frame().max(q.start_frame());
    let hi = p.end_frame().min(q.end_frame());
    if lo > hi {
        return 0.0;
    }
    let mut sum = 0.0;
    for t in lo..=hi {
        if let (Some(a), Some(b)) = (p.box_at(t), q.box_at(t)) {
            sum += iou(a, b);
        }
    }
    let span = p.end_frame().max(q.end_frame()) - p.start_frame().min(q.start_frame());
    if span == 0 {
        return sum.clamp(0.0, 1.0);
    }
    (sum / span as f64).clamp(0.0, 1.0)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::detection::{Detection, FeatureHistogram};
    use alloc::vec;
    use proptest::prelude::*;

    /// Adds one scored detection per `(frame, cx)` and returns its identity.
    pub(crate) fn scored(video: &mut Video, frame: u32, cx: f64, w: f64, score: f64) -> DetectionRef {
        let bbox = BoundingBox::new(frame, cx, 0.0, w, w).unwrap();
        let h = FeatureHistogram::uniform(3);
        let mut d = Detection::new(bbox, 0.5, h.clone(), h.clone(), h).unwrap();
        d.actionness = Some(score);
        video.push(d)
    }

    fn path_on(video: &mut Video, frames: core::ops::RangeInclusive<u32>, cx: f64) -> ActionPath {
        let ids: Vec<_> = frames.map(|t| scored(video, t, cx, 2.0, 1.0)).collect();
        ActionPath::from_refs(video, &ids).unwrap()
    }

    #[test]
    fn identical_paths_clamp_to_one() {
        let mut v = Video::new("v");
        let p = path_on(&mut v, 0..=4, 0.0);
        // raw value is 5 / 4
        assert_eq!(path_overlap(&p, &p), 1.0);
    }

    #[test]
    fn disjoint_spans_are_zero() {
        let mut v = Video::new("v");
        let p = path_on(&mut v, 0..=2, 0.0);
        let q = path_on(&mut v, 5..=7, 0.0);
        assert_eq!(path_overlap(&p, &q), 0.0);
    }

    #[test]
    fn partial_overlap_hand_value() {
        let mut v = Video::new("v");
        let p = path_on(&mut v, 0..=3, 0.0);
        let q = path_on(&mut v, 2..=5, 1.0);
        let got = path_overlap(&p, &q);
        assert!((got - 2.0 / 15.0).abs() < 1e-15, "{got}");
        assert_eq!(got, path_overlap(&q, &p));
    }

    #[test]
    fn single_frame_pair_is_box_iou() {
        let mut v = Video::new("v");
        let p = path_on(&mut v, 3..=3, 0.0);
        let q = path_on(&mut v, 3..=3, 1.0);
        assert!((path_overlap(&p, &q) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_gapped_or_empty_paths() {
        let mut v = Video::new("v");
        let a = scored(&mut v, 0, 0.0, 2.0, 1.0);
        let b = scored(&mut v, 2, 0.0, 2.0, 1.0);
        assert!(ActionPath::from_refs(&v, &[a, b]).is_err());
        assert!(ActionPath::from_refs(&v, &[]).is_err());
    }

    #[test]
    fn centers_are_member_means() {
        let mut v = Video::new("v");
        let mk = |frame, color: Vec<f64>| {
            let bbox = BoundingBox::new(frame, 0.0, 0.0, 1.0, 1.0).unwrap();
            let mut d = Detection::new(
                bbox,
                0.5,
                FeatureHistogram::uniform(2),
                FeatureHistogram::normalized(color).unwrap(),
                FeatureHistogram::uniform(2),
            )
            .unwrap();
            d.actionness = Some(0.25);
            d
        };
        let a = v.push(mk(0, vec![1.0, 0.0]));
        let b = v.push(mk(1, vec![0.0, 1.0]));
        let p = ActionPath::from_refs(&v, &[a, b]).unwrap();
        assert_eq!(p.color_center(), &[0.5, 0.5]);
        assert_eq!(p.score(), 0.5);
        assert_eq!((p.start_frame(), p.end_frame(), p.len()), (0, 1, 2));
    }

    proptest! {
        #[test]
        fn overlap_symmetric_bounded(
            s1 in 0u32..6, l1 in 1u32..6, s2 in 0u32..6, l2 in 1u32..6,
            x1 in -2.0..2.0f64, x2 in -2.0..2.0f64,
        ) {
            let mut v = Video::new("v");
            let p = path_on(&mut v, s1..=s1 + l1 - 1, x1);
            let q = path_on(&mut v, s2..=s2 + l2 - 1, x2);
            let o = path_overlap(&p, &q);
            prop_assert_eq!(o, path_overlap(&q, &p));
            prop_assert!((0.0..=1.0).contains(&o));
            if s1 + l1 - 1 < s2 || s2 + l2 - 1 < s1 {
                prop_assert_eq!(o, 0.0);
            }
        }
    }
}
