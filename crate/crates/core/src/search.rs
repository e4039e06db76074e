//! Candidate path generation: a forward pass that accumulates actionness over
//! linkable boxes while maintaining a top-N pool, then a backward trace that
//! recovers each pooled path from stored backpointers.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::detection::{Detection, DetectionRef, Video};
use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::path::ActionPath;

/// Thresholds of the box linking predicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    /// Minimum IoU between consecutive boxes (`eta_o`).
    pub iou_threshold: f64,
    /// Maximum appearance distance between consecutive boxes (`eta_f`).
    pub appearance_threshold: f64,
    /// Weight of the gradient-histogram distance (`lambda_a`).
    pub lambda_a: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.3, appearance_threshold: 0.5, lambda_a: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub link: LinkConfig,
    /// Capacity of the candidate pool (`N_pool`).
    pub pool_size: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { link: LinkConfig::default(), pool_size: 50 }
    }
}

/// `||C(a) - C(b)|| + lambda_a * ||H(a) - H(b)||`.
pub fn appearance_distance(a: &Detection, b: &Detection, lambda_a: f64) -> f64 {
    a.color_hist.l2_distance(&b.color_hist) + lambda_a * a.grad_hist.l2_distance(&b.grad_hist)
}

/// Whether `b` may directly follow `a` in a path.
pub fn linkable(a: &Detection, b: &Detection, cfg: &LinkConfig) -> Result<bool> {
    if b.frame() != a.frame() + 1 {
        return Err(Error::NonAdjacentLink { from: a.frame(), to: b.frame() });
    }
    Ok(links(a, b, cfg))
}

pub(crate) fn links(a: &Detection, b: &Detection, cfg: &LinkConfig) -> bool {
    iou(&a.bbox, &b.bbox) >= cfg.iou_threshold && appearance_distance(a, b, cfg.lambda_a) <= cfg.appearance_threshold
}

/// `links[t][i]` lists the indices on frame `t - 1` that box `i` on frame `t`
/// may follow. Frame 0 has no predecessors.
pub(crate) fn link_table(video: &Video, cfg: &LinkConfig) -> Vec<Vec<Vec<u32>>> {
    video
        .frames
        .iter()
        .enumerate()
        .map(|(t, dets)| {
            dets.iter()
                .map(|b| match t.checked_sub(1) {
                    Some(prev) => video.frames[prev]
                        .iter()
                        .enumerate()
                        .filter(|(_, a)| links(a, b, cfg))
                        .map(|(j, _)| j as u32)
                        .collect(),
                    None => Vec::new(),
                })
                .collect()
        })
        .collect()
}

/// Accumulated scores and backpointers of the forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `tau[t][i]`: best accumulated actionness of a path ending at box `i` on frame `t`.
    pub tau: Vec<Vec<f64>>,
    /// Index on frame `t - 1` of the arg-max predecessor, if any was linkable.
    pub back: Vec<Vec<Option<u32>>>,
}

impl ForwardPass {
    /// Follows backpointers from `tail` to the path start.
    pub fn trace(&self, tail: DetectionRef) -> Vec<DetectionRef> {
        let mut ids = vec![tail];
        let mut cur = tail;
        while let Some(prev) = self.back[cur.frame as usize][cur.index as usize] {
            cur = DetectionRef { frame: cur.frame - 1, index: prev };
            ids.push(cur);
        }
        ids.reverse();
        ids
    }

    fn tau_of(&self, id: DetectionRef) -> f64 {
        self.tau[id.frame as usize][id.index as usize]
    }
}

/// One pool entry. The path it stands for is the backpointer chain of `tail`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolEntry {
    pub tau: f64,
    pub tail: DetectionRef,
}

/// Top-N candidates ordered by `tau` descending, ties by lowest tail.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    capacity: usize,
    entries: Vec<PoolEntry>,
}

impl CandidatePool {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: Vec::with_capacity(capacity) }
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn sort(&mut self) {
        self.entries.sort_by(rank);
    }

    fn holds(&self, tail: DetectionRef) -> bool {
        self.entries.iter().any(|e| e.tail == tail)
    }

    /// Step 1: every entry whose tail sits on frame `t - 1` moves to the
    /// linkable successor with the largest `tau`. Entries with no linkable
    /// successor stay frozen. Entries that land on the same tail describe the
    /// same path and are merged.
    fn extend(&mut self, t: usize, links: &[Vec<u32>], pass: &ForwardPass) {
        if t == 0 {
            return;
        }
        let prev = (t - 1) as u32;
        for entry in self.entries.iter_mut().filter(|e| e.tail.frame == prev) {
            let best = links
                .iter()
                .enumerate()
                .filter(|(_, preds)| preds.contains(&entry.tail.index))
                .map(|(i, _)| (i, pass.tau[t][i]))
                .fold(None::<(usize, f64)>, |acc, (i, tau)| match acc {
                    Some((_, best)) if best >= tau => acc,
                    _ => Some((i, tau)),
                });
            if let Some((i, tau)) = best {
                *entry = PoolEntry { tau, tail: DetectionRef { frame: t as u32, index: i as u32 } };
            }
        }
        self.sort();
        let mut seen: Vec<DetectionRef> = Vec::with_capacity(self.entries.len());
        self.entries.retain(|e| {
            if seen.contains(&e.tail) {
                false
            } else {
                seen.push(e.tail);
                true
            }
        });
    }

    /// Step 2: a box whose `tau` beats the weakest entry replaces it. Boxes
    /// already serving as a tail are skipped.
    fn admit(&mut self, t: usize, pass: &ForwardPass) {
        let mut order: Vec<usize> = (0..pass.tau[t].len()).collect();
        order.sort_by(|&a, &b| pass.tau[t][b].total_cmp(&pass.tau[t][a]).then(a.cmp(&b)));
        for i in order {
            let tail = DetectionRef { frame: t as u32, index: i as u32 };
            if self.holds(tail) {
                continue;
            }
            let entry = PoolEntry { tau: pass.tau[t][i], tail };
            if self.entries.len() < self.capacity {
                self.entries.push(entry);
                self.sort();
            } else if let Some(weakest) = self.entries.last_mut() {
                if entry.tau > weakest.tau {
                    *weakest = entry;
                    self.sort();
                }
            }
        }
    }
}

fn rank(a: &PoolEntry, b: &PoolEntry) -> Ordering {
    b.tau.total_cmp(&a.tau).then(a.tail.cmp(&b.tail))
}

/// Runs the forward recurrence `tau(b_t) = max tau(b_{t-1}) + S(b_t)` over
/// linkable predecessors. Boxes with no linkable predecessor start fresh.
/// Predecessor ties go to the lowest index.
pub fn forward_pass(video: &Video, link: &LinkConfig) -> Result<ForwardPass> {
    let table = link_table(video, link);
    forward_pass_with(video, &table)
}

fn forward_pass_with(video: &Video, table: &[Vec<Vec<u32>>]) -> Result<ForwardPass> {
    let mut tau: Vec<Vec<f64>> = Vec::with_capacity(video.frames.len());
    let mut back: Vec<Vec<Option<u32>>> = Vec::with_capacity(video.frames.len());
    for (t, dets) in video.frames.iter().enumerate() {
        let mut tau_t = Vec::with_capacity(dets.len());
        let mut back_t = Vec::with_capacity(dets.len());
        for (i, det) in dets.iter().enumerate() {
            let s = det.actionness.ok_or(Error::MissingActionness { frame: t as u32, index: i as u32 })?;
            let mut best: Option<(u32, f64)> = None;
            for &j in &table[t][i] {
                let prev = tau[t - 1][j as usize];
                if best.is_none_or(|(_, b)| prev > b) {
                    best = Some((j, prev));
                }
            }
            match best {
                Some((j, prev)) => {
                    tau_t.push(prev + s);
                    back_t.push(Some(j));
                }
                None => {
                    tau_t.push(s);
                    back_t.push(None);
                }
            }
        }
        tau.push(tau_t);
        back.push(back_t);
    }
    Ok(ForwardPass { tau, back })
}

/// Forward search plus backward trace. Returns at most `pool_size` paths
/// sorted by score descending.
pub fn forward_backward_search(video: &Video, cfg: &SearchConfig) -> Result<Vec<ActionPath>> {
    if cfg.pool_size == 0 {
        return Err(Error::InvalidConfig("pool size must be positive".into()));
    }
    let table = link_table(video, &cfg.link);
    let pass = forward_pass_with(video, &table)?;
    let mut pool = CandidatePool::new(cfg.pool_size);
    for (t, links) in table.iter().enumerate() {
        pool.extend(t, links, &pass);
        pool.admit(t, &pass);
    }
    pool.entries
        .iter()
        .map(|e| {
            debug_assert_eq!(e.tau, pass.tau_of(e.tail));
            ActionPath::from_refs(video, &pass.trace(e.tail))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::FeatureHistogram;
    use crate::geometry::BoundingBox;
    use alloc::vec;

    fn det(frame: u32, cx: f64, color: &[f64], score: f64) -> Detection {
        let b = BoundingBox::new(frame, cx, 0.0, 10.0, 10.0).unwrap();
        let c = FeatureHistogram::normalized(color.to_vec()).unwrap();
        let g = FeatureHistogram::uniform(2);
        let mut d = Detection::new(b, 0.5, g.clone(), c, g).unwrap();
        d.actionness = Some(score);
        d
    }

    #[test]
    fn identity_links() {
        let a = det(0, 0.0, &[1.0, 0.0], 1.0);
        let b = det(1, 0.0, &[1.0, 0.0], 1.0);
        assert!(linkable(&a, &b, &LinkConfig::default()).unwrap());
    }

    #[test]
    fn disjoint_boxes_never_link() {
        let a = det(0, 0.0, &[1.0, 0.0], 1.0);
        let b = det(1, 100.0, &[1.0, 0.0], 1.0);
        assert!(!linkable(&a, &b, &LinkConfig { appearance_threshold: 1e9, ..LinkConfig::default() }).unwrap());
    }

    #[test]
    fn appearance_gate_hand_case() {
        // IoU 0.4 >= 0.3, but 0.6 + 1.0 * 0.2 = 0.8 > 0.5
        let w = 10.0;
        // shift giving IoU 0.4 for equal squares: (w - d) / (w + d) = 0.4
        let d = w * 0.6 / 1.4;
        let mk = |frame, cx, color: Vec<f64>, grad: Vec<f64>| {
            let b = BoundingBox::new(frame, cx, 0.0, w, w).unwrap();
            let h = FeatureHistogram::uniform(2);
            Detection::new(
                b,
                0.5,
                h,
                FeatureHistogram::normalized(color).unwrap(),
                FeatureHistogram::normalized(grad).unwrap(),
            )
            .unwrap()
        };
        let c_off = 0.6 / core::f64::consts::SQRT_2;
        let g_off = 0.2 / core::f64::consts::SQRT_2;
        let a = mk(0, 0.0, vec![0.5 + c_off / 2.0, 0.5 - c_off / 2.0], vec![0.5 + g_off / 2.0, 0.5 - g_off / 2.0]);
        let b = mk(1, d, vec![0.5 - c_off / 2.0, 0.5 + c_off / 2.0], vec![0.5 - g_off / 2.0, 0.5 + g_off / 2.0]);
        assert!((iou(&a.bbox, &b.bbox) - 0.4).abs() < 1e-12);
        assert!((a.color_hist.l2_distance(&b.color_hist) - 0.6).abs() < 1e-12);
        assert!((a.grad_hist.l2_distance(&b.grad_hist) - 0.2).abs() < 1e-12);
        assert!(!linkable(&a, &b, &LinkConfig::default()).unwrap());
        let loose = LinkConfig { appearance_threshold: 0.81, ..LinkConfig::default() };
        assert!(linkable(&a, &b, &loose).unwrap());
    }

    #[test]
    fn non_adjacent_query_is_an_error() {
        let a = det(0, 0.0, &[1.0, 0.0], 1.0);
        let b = det(2, 0.0, &[1.0, 0.0], 1.0);
        assert_eq!(linkable(&a, &b, &LinkConfig::default()), Err(Error::NonAdjacentLink { from: 0, to: 2 }));
    }

    #[test]
    fn single_chain_spans_video() {
        let scores = [0.3, 1.1, 0.7, 0.9, 0.2];
        let mut v = Video::new("v");
        for (t, s) in scores.iter().enumerate() {
            v.push(det(t as u32, t as f64, &[1.0, 0.0], *s));
        }
        let paths = forward_backward_search(&v, &SearchConfig::default()).unwrap();
        let top = &paths[0];
        assert_eq!((top.start_frame(), top.end_frame()), (0, 4));
        assert_eq!(top.score(), scores.iter().fold(0.0, |a, s| a + s));
        // the single detection chain is the only distinct path
        assert_eq!(paths.len(), 1);
    }

    #[test]
    fn link_free_pool_keeps_top_detections() {
        let mut v = Video::new("v");
        let mut all = Vec::new();
        for t in 0..4u32 {
            for i in 0..3 {
                let s = ((t * 3 + i) * 7 % 11) as f64 / 10.0;
                // boxes hop far apart each frame, so nothing links
                v.push(det(t, (t * 1000 + i * 100) as f64, &[1.0, 0.0], s));
                all.push(s);
            }
        }
        let cfg = SearchConfig { pool_size: 5, ..SearchConfig::default() };
        let paths = forward_backward_search(&v, &cfg).unwrap();
        assert_eq!(paths.len(), 5);
        all.sort_by(|a, b| b.total_cmp(a));
        for (p, s) in paths.iter().zip(&all) {
            assert_eq!(p.len(), 1);
            assert_eq!(p.score(), *s);
        }
    }

    #[test]
    fn empty_video_and_empty_frames() {
        let v = Video::new("v");
        assert!(forward_backward_search(&v, &SearchConfig::default()).unwrap().is_empty());
        let mut v = Video::new("v").with_frame_count(3);
        v.push(det(0, 0.0, &[1.0, 0.0], 1.0));
        v.push(det(2, 0.0, &[1.0, 0.0], 1.0));
        let paths = forward_backward_search(&v, &SearchConfig::default()).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths.iter().all(|p| p.len() == 1));
    }

    #[test]
    fn missing_actionness_is_reported() {
        let mut v = Video::new("v");
        let mut d = det(0, 0.0, &[1.0, 0.0], 1.0);
        d.actionness = None;
        v.push(d);
        assert_eq!(
            forward_backward_search(&v, &SearchConfig::default()).unwrap_err(),
            Error::MissingActionness { frame: 0, index: 0 }
        );
    }

    #[test]
    fn chains_to_argmax_predecessor() {
        // frame 0: two boxes linkable to the single box on frame 1
        let mut v = Video::new("v");
        v.push(det(0, 0.0, &[1.0, 0.0], 0.2));
        v.push(det(0, 1.0, &[1.0, 0.0], 0.9));
        v.push(det(1, 0.5, &[1.0, 0.0], 0.1));
        let pass = forward_pass(&v, &LinkConfig::default()).unwrap();
        assert_eq!(pass.back[1][0], Some(1));
        assert_eq!(pass.tau[1][0], 0.9 + 0.1);
        let paths = forward_backward_search(&v, &SearchConfig::default()).unwrap();
        assert_eq!(paths[0].ids().map(|id| id.index).collect::<Vec<_>>(), vec![1, 0]);
        // both frame-0 entries move onto the same tail and merge
        assert_eq!(paths.len(), 1);
    }
}
