//! Track-level IoU, recall at a threshold, and ABO/MABO.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::proposal::ActionProposal;

/// Annotated actor: one optional box per frame starting at `start_frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTrack {
    pub video: String,
    pub label: String,
    pub start_frame: u32,
    pub boxes: Vec<Option<BoundingBox>>,
}

impl GroundTruthTrack {
    pub fn new(
        video: impl Into<String>,
        label: impl Into<String>,
        start_frame: u32,
        boxes: Vec<Option<BoundingBox>>,
    ) -> Result<Self> {
        if boxes.iter().all(Option::is_none) {
            return Err(Error::EmptyInput("ground truth has no annotated frame"));
        }
        Ok(Self { video: video.into(), label: label.into(), start_frame, boxes })
    }

    pub fn box_at(&self, frame: u32) -> Option<&BoundingBox> {
        let offset = frame.checked_sub(self.start_frame)? as usize;
        self.boxes.get(offset)?.as_ref()
    }

    pub fn annotated_frames(&self) -> impl Iterator<Item = u32> + '_ {
        self.boxes.iter().enumerate().filter(|(_, b)| b.is_some()).map(move |(i, _)| self.start_frame + i as u32)
    }
}

/// Mean per-frame IoU over frames where either side has a box; frames with a
/// box on only one side count as zero.
pub fn track_iou(gt: &GroundTruthTrack, proposal: &ActionProposal) -> Result<f64> {
    let mut frames: Vec<u32> = gt.annotated_frames().collect();
    frames.extend(proposal.track.entries().iter().map(|e| e.frame()));
    frames.sort_unstable();
    frames.dedup();
    if frames.is_empty() {
        return Err(Error::NoComparableFrames);
    }
    let mut sum = 0.0;
    for &t in &frames {
        if let (Some(g), Some(p)) = (gt.box_at(t), proposal.track.entry_at(t)) {
            sum += iou(g, &p.bbox);
        }
    }
    Ok(sum / frames.len() as f64)
}

/// Fraction of ground-truth tracks matched by a proposal with track IoU at
/// least `eta`. Matching is one-to-one, best pair first.
pub fn recall_at(proposals: &[ActionProposal], gts: &[GroundTruthTrack], eta: f64) -> Result<f64> {
    if gts.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let matched = match_greedy(proposals, gts)?.into_iter().filter(|(_, _, v)| *v >= eta).count();
    Ok(matched as f64 / gts.len() as f64)
}

/// Best-first one-to-one matching over all same-video pairs with positive
/// IoU. Returns `(gt index, proposal index, iou)` in acceptance order.
pub fn match_greedy(proposals: &[ActionProposal], gts: &[GroundTruthTrack]) -> Result<Vec<(usize, usize, f64)>> {
    let mut pairs = Vec::new();
    for (g, gt) in gts.iter().enumerate() {
        for (p, prop) in proposals.iter().enumerate() {
            if prop.video == gt.video {
                let v = track_iou(gt, prop)?;
                if v > 0.0 {
                    pairs.push((g, p, v));
                }
            }
        }
    }
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut gt_used = alloc::vec![false; gts.len()];
    let mut prop_used = alloc::vec![false; proposals.len()];
    let mut out = Vec::new();
    for (g, p, v) in pairs {
        if !gt_used[g] && !prop_used[p] {
            gt_used[g] = true;
            prop_used[p] = true;
            out.push((g, p, v));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAbo {
    pub label: String,
    pub count: usize,
    pub abo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AboReport {
    pub abo: f64,
    pub mabo: f64,
    pub per_class: Vec<ClassAbo>,
}

/// Best track IoU reached by any same-video proposal, per ground truth.
pub fn best_overlaps(proposals: &[ActionProposal], gts: &[GroundTruthTrack]) -> Result<Vec<f64>> {
    gts.iter()
        .map(|gt| {
            proposals.iter().filter(|p| p.video == gt.video).try_fold(0.0f64, |best, p| Ok(best.max(track_iou(gt, p)?)))
        })
        .collect()
}

/// ABO is the mean best overlap over all ground truths; MABO is the mean of
/// per-class ABO. Classes are listed in label order.
pub fn abo_mabo(proposals: &[ActionProposal], gts: &[GroundTruthTrack]) -> Result<AboReport> {
    if gts.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let best = best_overlaps(proposals, gts)?;
    let abo = best.iter().sum::<f64>() / best.len() as f64;
    let mut by_class: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (gt, b) in gts.iter().zip(&best) {
        by_class.entry(gt.label.as_str()).or_default().push(*b);
    }
    let per_class: Vec<ClassAbo> = by_class
        .into_iter()
        .map(|(label, v)| ClassAbo { label: label.into(), count: v.len(), abo: v.iter().sum::<f64>() / v.len() as f64 })
        .collect();
    let mabo = per_class.iter().map(|c| c.abo).sum::<f64>() / per_class.len() as f64;
    Ok(AboReport { abo, mabo, per_class })
}

/// Everything reported for a proposal set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub eta: f64,
    pub recall: f64,
    pub abo: f64,
    pub mabo: f64,
    pub ground_truths: usize,
    pub proposals: usize,
    /// Mean number of proposals per video that has ground truth.
    pub proposals_per_video: f64,
    pub per_class: Vec<ClassAbo>,
}

pub fn evaluate(proposals: &[ActionProposal], gts: &[GroundTruthTrack], eta: f64) -> Result<Metrics> {
    let recall = recall_at(proposals, gts, eta)?;
    let report = abo_mabo(proposals, gts)?;
    let mut videos: Vec<&str> = gts.iter().map(|g| g.video.as_str()).collect();
    videos.sort_unstable();
    videos.dedup();
    let counted = proposals.iter().filter(|p| videos.contains(&p.video.as_str())).count();
    Ok(Metrics {
        eta,
        recall,
        abo: report.abo,
        mabo: report.mabo,
        ground_truths: gts.len(),
        proposals: proposals.len(),
        proposals_per_video: counted as f64 / videos.len() as f64,
        per_class: report.per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::completion::{BoxSource, Track, TrackEntry};
    use alloc::vec;

    fn b(t: u32) -> BoundingBox {
        BoundingBox::new(t, 10.0, 10.0, 4.0, 4.0).unwrap()
    }

    fn gt(label: &str, start: u32, len: u32) -> GroundTruthTrack {
        GroundTruthTrack::new("v", label, start, (start..start + len).map(|t| Some(b(t))).collect()).unwrap()
    }

    fn prop(start: u32, len: u32, dx: f64) -> ActionProposal {
        let entries = (start..start + len)
            .map(|t| TrackEntry {
                bbox: b(t).translated(dx, 0.0),
                source: BoxSource::Detected,
                actionness: Some(1.0),
                detection: None,
            })
            .collect();
        ActionProposal { video: "v".into(), track: Track::new(entries).unwrap(), score: 1.0 }
    }

    #[test]
    fn track_iou_hand_cases() {
        assert_eq!(track_iou(&gt("a", 0, 10), &prop(0, 10, 0.0)).unwrap(), 1.0);
        assert!((track_iou(&gt("a", 0, 20), &prop(0, 10, 0.0)).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(track_iou(&gt("a", 0, 10), &prop(20, 10, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn null_frames_are_skipped_unless_proposed() {
        let g = GroundTruthTrack::new("v", "a", 0, vec![Some(b(0)), None, Some(b(2))]).unwrap();
        let p = ActionProposal {
            video: "v".into(),
            track: Track::new(vec![prop(0, 1, 0.0).track.entries()[0], prop(2, 1, 0.0).track.entries()[0]]).unwrap(),
            score: 0.0,
        };
        assert_eq!(track_iou(&g, &p).unwrap(), 1.0);
        assert!((track_iou(&g, &prop(0, 3, 0.0)).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(GroundTruthTrack::new("v", "a", 0, vec![None]).is_err());
    }

    #[test]
    fn recall_counts() {
        // shift of 1 px on a 4 px box gives IoU 0.6, shift of 1.7 px gives about 0.4
        let gts = vec![gt("a", 0, 10), gt("a", 100, 10)];
        let p1 = prop(0, 10, 1.0);
        let p2 = prop(100, 10, 1.7);
        assert!((track_iou(&gts[0], &p1).unwrap() - 0.6).abs() < 1e-12);
        assert!(track_iou(&gts[1], &p2).unwrap() < 0.5);
        assert_eq!(recall_at(&[p1, p2], &gts, 0.5).unwrap(), 0.5);
        assert_eq!(recall_at(&[], &gts, 0.5).unwrap(), 0.0);
        assert_eq!(recall_at(&[], &[], 0.5).unwrap_err(), Error::NoGroundTruth);
    }

    #[test]
    fn proposals_match_one_ground_truth_each() {
        let gts = vec![gt("a", 0, 10), gt("a", 0, 10)];
        assert_eq!(recall_at(&[prop(0, 10, 0.0)], &gts, 0.5).unwrap(), 0.5);
        assert_eq!(recall_at(&[prop(0, 10, 0.0), prop(0, 10, 0.0)], &gts, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn abo_and_mabo() {
        let gts = vec![gt("a", 0, 10), gt("a", 20, 10), gt("b", 40, 10)];
        let exact: Vec<_> = gts.iter().map(|g| prop(g.start_frame, 10, 0.0)).collect();
        let r = abo_mabo(&exact, &gts).unwrap();
        assert_eq!((r.abo, r.mabo), (1.0, 1.0));

        // class a: 0.8 and 0.8; class b: 0.4
        let partial = vec![prop(0, 8, 0.0), prop(20, 8, 0.0), prop(40, 4, 0.0)];
        let r = abo_mabo(&partial, &gts).unwrap();
        assert!((r.per_class[0].abo - 0.8).abs() < 1e-12);
        assert!((r.per_class[1].abo - 0.4).abs() < 1e-12);
        assert!((r.mabo - 0.6).abs() < 1e-12);
        assert!((r.abo - 2.0 / 3.0).abs() < 1e-12);

        let single = vec![gt("a", 0, 10), gt("a", 20, 10)];
        let r = abo_mabo(&partial, &single).unwrap();
        assert_eq!(r.abo, r.mabo);
    }
}
