//! Gap filling by tracking-by-detection.
//!
//! Paths of a set are chained into tracks. Missing frames are filled one at a
//! time: the last known box is shifted, a search region 1.5 times its size is
//! scanned with windows at several scales, and the window scoring highest
//! under a linear detector wins. Each filled frame is fed back to the
//! detector as a new positive, with nearby low-overlap boxes as negatives.
//!
//! Boxes carry no pixels here, so window features come from an
//! [`Appearance`] source.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::association::PathSet;
use crate::detection::{Detection, DetectionRef, Video};
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::math::l2_distance;
use crate::path::ActionPath;
use crate::search::LinkConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxSource {
    Detected,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub bbox: BoundingBox,
    pub source: BoxSource,
    /// Actionness of the underlying detection, for detected entries.
    pub actionness: Option<f64>,
    pub detection: Option<DetectionRef>,
}

impl TrackEntry {
    pub fn frame(&self) -> u32 {
        self.bbox.frame
    }
}

/// Boxes of one actor in strictly increasing frame order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TrackEntry>", into = "Vec<TrackEntry>")]
pub struct Track {
    entries: Vec<TrackEntry>,
}

impl TryFrom<Vec<TrackEntry>> for Track {
    type Error = Error;

    fn try_from(entries: Vec<TrackEntry>) -> Result<Self> {
        Track::new(entries)
    }
}

impl From<Track> for Vec<TrackEntry> {
    fn from(t: Track) -> Self {
        t.entries
    }
}

impl Track {
    pub fn new(entries: Vec<TrackEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidPath("track has no entries".into()));
        }
        if let Some(w) = entries.windows(2).find(|w| w[1].frame() <= w[0].frame()) {
            return Err(Error::InvalidPath(format!(
                "track frames must increase strictly ({} then {})",
                w[0].frame(),
                w[1].frame()
            )));
        }
        Ok(Self { entries })
    }

    /// Track of detected entries from temporally disjoint paths.
    pub fn from_paths(paths: &[&ActionPath]) -> Result<Self> {
        let mut entries: Vec<TrackEntry> = paths
            .iter()
            .flat_map(|p| p.nodes())
            .map(|n| TrackEntry {
                bbox: n.bbox,
                source: BoxSource::Detected,
                actionness: Some(n.actionness),
                detection: Some(n.id),
            })
            .collect();
        entries.sort_by_key(TrackEntry::frame);
        Self::new(entries)
    }

    pub fn entries(&self) -> &[TrackEntry] {
        &self.entries
    }

    pub fn first_frame(&self) -> u32 {
        self.entries[0].frame()
    }

    pub fn last_frame(&self) -> u32 {
        self.entries[self.entries.len() - 1].frame()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Frames from first to last, inclusive.
    pub fn span(&self) -> usize {
        (self.last_frame() - self.first_frame() + 1) as usize
    }

    pub fn is_contiguous(&self) -> bool {
        self.span() == self.entries.len()
    }

    pub fn entry_at(&self, frame: u32) -> Option<&TrackEntry> {
        self.entries.binary_search_by_key(&frame, TrackEntry::frame).ok().map(|i| &self.entries[i])
    }

    /// Missing frame ranges `(first, last)` between the first and last entry.
    pub fn gaps(&self) -> Vec<(u32, u32)> {
        self.entries
            .windows(2)
            .filter(|w| w[1].frame() > w[0].frame() + 1)
            .map(|w| (w[0].frame() + 1, w[1].frame() - 1))
            .collect()
    }

    /// Sum of actionness over detected entries, in frame order.
    pub fn detected_score(&self) -> f64 {
        self.entries.iter().filter_map(|e| e.actionness).sum()
    }

    /// Splits the track at every gap.
    pub fn contiguous_runs(&self) -> Vec<Track> {
        let mut runs = Vec::new();
        let mut start = 0;
        for i in 1..=self.entries.len() {
            if i == self.entries.len() || self.entries[i].frame() != self.entries[i - 1].frame() + 1 {
                runs.push(Track { entries: self.entries[start..i].to_vec() });
                start = i;
            }
        }
        runs
    }
}

/// Chains the paths of a set into tracks.
///
/// Paths are visited by start frame. Each joins the existing chain that ends
/// before it starts and whose appearance center is nearest, provided the
/// center distance is within the link appearance threshold; otherwise it
/// opens a new chain.
pub fn link_paths_into_tracks(set: &PathSet, link: &LinkConfig) -> Vec<Track> {
    struct Chain<'a> {
        paths: Vec<&'a ActionPath>,
        end: u32,
        frames: f64,
        color: Vec<f64>,
        grad: Vec<f64>,
    }
    let mut order: Vec<&ActionPath> = set.paths.iter().collect();
    order.sort_by(|a, b| a.start_frame().cmp(&b.start_frame()).then(b.score().total_cmp(&a.score())));

    let mut chains: Vec<Chain> = Vec::new();
    for p in order {
        let best = chains
            .iter()
            .enumerate()
            .filter(|(_, c)| c.end < p.start_frame())
            .map(|(i, c)| {
                let d = l2_distance(&c.color, p.color_center()) + link.lambda_a * l2_distance(&c.grad, p.grad_center());
                (i, d)
            })
            .filter(|(_, d)| *d <= link.appearance_threshold)
            .fold(None::<(usize, f64)>, |acc, (i, d)| match acc {
                Some((_, best)) if best <= d => acc,
                _ => Some((i, d)),
            });
        let n = p.len() as f64;
        match best {
            Some((i, _)) => {
                let c = &mut chains[i];
                let total = c.frames + n;
                for (acc, v) in c.color.iter_mut().zip(p.color_center()) {
                    *acc = (*acc * c.frames + v * n) / total;
                }
                for (acc, v) in c.grad.iter_mut().zip(p.grad_center()) {
                    *acc = (*acc * c.frames + v * n) / total;
                }
                c.frames = total;
                c.end = p.end_frame();
                c.paths.push(p);
            }
            None => chains.push(Chain {
                paths: vec![p],
                end: p.end_frame(),
                frames: n,
                color: p.color_center().to_vec(),
                grad: p.grad_center().to_vec(),
            }),
        }
    }
    chains.iter().map(|c| Track::from_paths(&c.paths).expect("chained paths are disjoint and ordered")).collect()
}

/// Feature vector (color then gradient histogram) of an arbitrary box.
pub trait Appearance {
    fn describe(&self, bbox: &BoundingBox) -> Vec<f64>;
}

/// Renders a box's features as a blend of known sources on its frame.
///
/// Each source contributes its features weighted by IoU with the queried box;
/// whatever weight is left goes to a background descriptor. When the weights
/// exceed one they are renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureAppearance {
    frames: Vec<Vec<(BoundingBox, Vec<f64>)>>,
    background: Vec<f64>,
}

impl MixtureAppearance {
    pub fn new(frames: Vec<Vec<(BoundingBox, Vec<f64>)>>, background: Vec<f64>) -> Self {
        Self { frames, background }
    }

    /// Sources are the video's detections; the background is uniform within
    /// each of the color and gradient blocks.
    pub fn from_video(video: &Video) -> Self {
        let (dc, dg) = video.appearance_dims().unwrap_or((1, 1));
        let frames = video.frames.iter().map(|dets| dets.iter().map(|d| (d.bbox, d.appearance())).collect()).collect();
        Self::new(frames, uniform_background(dc, dg))
    }
}

/// Uniform color block followed by a uniform gradient block.
pub fn uniform_background(color_dim: usize, grad_dim: usize) -> Vec<f64> {
    let mut v = vec![1.0 / color_dim as f64; color_dim];
    v.extend(core::iter::repeat_n(1.0 / grad_dim as f64, grad_dim));
    v
}

impl Appearance for MixtureAppearance {
    fn describe(&self, bbox: &BoundingBox) -> Vec<f64> {
        let mut out = vec![0.0; self.background.len()];
        let mut total = 0.0;
        if let Some(sources) = self.frames.get(bbox.frame as usize) {
            for (b, feat) in sources {
                let w = iou(b, bbox);
                if w > 0.0 {
                    total += w;
                    out.iter_mut().zip(feat).for_each(|(o, f)| *o += w * f);
                }
            }
        }
        if total > 1.0 {
            out.iter_mut().for_each(|o| *o /= total);
        } else {
            let rest = 1.0 - total;
            out.iter_mut().zip(&self.background).for_each(|(o, b)| *o += rest * b);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub learning_rate: f64,
    pub regularization: f64,
    /// Passes over the data at initial training.
    pub epochs: usize,
    /// Passes over the accumulated data after each update.
    pub update_epochs: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { learning_rate: 0.5, regularization: 1e-4, epochs: 50, update_epochs: 5, seed: 0 }
    }
}

/// Linear detector trained with class-balanced hinge-loss updates.
#[derive(Debug, Clone)]
pub struct OnlineClassifier {
    weights: Vec<f64>,
    bias: f64,
    positives: Vec<Vec<f64>>,
    negatives: Vec<Vec<f64>>,
    cfg: ClassifierConfig,
    rng: ChaCha8Rng,
}

impl OnlineClassifier {
    pub fn fit(positives: Vec<Vec<f64>>, negatives: Vec<Vec<f64>>, cfg: ClassifierConfig) -> Result<Self> {
        let dim = positives.first().ok_or(Error::EmptyClass("positive"))?.len();
        if negatives.is_empty() {
            return Err(Error::EmptyClass("negative"));
        }
        if let Some(bad) = positives.iter().chain(&negatives).find(|x| x.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, actual: bad.len() });
        }
        let mut clf = Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            positives,
            negatives,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        };
        clf.run_epochs(cfg.epochs);
        Ok(clf)
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn positive_count(&self) -> usize {
        self.positives.len()
    }

    pub fn negative_count(&self) -> usize {
        self.negatives.len()
    }

    /// Decision value `w . x + b`.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Adds examples and retrains on everything seen so far.
    pub fn update(&mut self, positives: Vec<Vec<f64>>, negatives: Vec<Vec<f64>>) -> Result<()> {
        let dim = self.dim();
        if let Some(bad) = positives.iter().chain(&negatives).find(|x| x.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, actual: bad.len() });
        }
        self.positives.extend(positives);
        self.negatives.extend(negatives);
        self.run_epochs(self.cfg.update_epochs);
        Ok(())
    }

    fn run_epochs(&mut self, epochs: usize) {
        let np = self.positives.len();
        let nn = self.negatives.len();
        let total = (np + nn) as f64;
        let pos_weight = total / (2.0 * np as f64);
        let neg_weight = total / (2.0 * nn as f64);
        let mut order: Vec<usize> = (0..np + nn).collect();
        let lr = self.cfg.learning_rate;
        for _ in 0..epochs {
            order.shuffle(&mut self.rng);
            for &k in &order {
                let (x, y, cw) = if k < np {
                    (&self.positives[k], 1.0, pos_weight)
                } else {
                    (&self.negatives[k - np], -1.0, neg_weight)
                };
                let margin = y * (self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias);
                let decay = 1.0 - lr * self.cfg.regularization;
                self.weights.iter_mut().for_each(|w| *w *= decay);
                if margin < 1.0 {
                    let step = lr * y * cw;
                    self.weights.iter_mut().zip(x).for_each(|(w, v)| *w += step * v);
                    self.bias += step;
                }
            }
        }
    }
}

/// Trains a detector on the concatenated color and gradient histograms.
pub fn train_classifier(
    positives: &[Detection],
    negatives: &[Detection],
    cfg: ClassifierConfig,
) -> Result<OnlineClassifier> {
    OnlineClassifier::fit(
        positives.iter().map(Detection::appearance).collect(),
        negatives.iter().map(Detection::appearance).collect(),
        cfg,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    /// Search region size relative to the shifted box.
    pub region_scale: f64,
    /// Window sizes relative to the shifted box.
    pub scales: Vec<f64>,
    /// Grid stride as a fraction of the box width (at least one pixel).
    pub stride_fraction: f64,
    /// `(width, height)` of the frame, when known.
    pub frame_size: Option<(f64, f64)>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { region_scale: 1.5, scales: vec![0.8, 0.9, 1.0, 1.1, 1.2], stride_fraction: 0.1, frame_size: None }
    }
}

/// Grid stride in pixels for a box of width `w`.
pub fn window_stride(w: f64, cfg: &WindowConfig) -> f64 {
    libm::floor(cfg.stride_fraction * w).max(1.0)
}

/// Search region around `prev` shifted by `shift`.
pub fn search_region(prev: &BoundingBox, shift: (f64, f64), cfg: &WindowConfig) -> BoundingBox {
    prev.translated(shift.0, shift.1).scaled(cfg.region_scale, cfg.region_scale)
}

/// Scan windows inside the search region around `prev + shift`.
///
/// Centers sit on a grid anchored at the shifted center, so the unscaled
/// window at zero offset is always included when the frame allows it.
/// Windows leaving the frame are dropped; if that drops everything, windows
/// whose center is inside the frame are kept instead, and failing that the
/// unclipped set is returned.
pub fn generate_search_windows(prev: &BoundingBox, shift: (f64, f64), cfg: &WindowConfig) -> Vec<BoundingBox> {
    const EPS: f64 = 1e-9;
    let anchor = prev.translated(shift.0, shift.1);
    let stride = window_stride(prev.w, cfg);
    let region_w = cfg.region_scale * anchor.w;
    let region_h = cfg.region_scale * anchor.h;
    let mut out = Vec::new();
    for &s in &cfg.scales {
        let (sw, sh) = (anchor.w * s, anchor.h * s);
        let room_x = (region_w - sw) / 2.0;
        let room_y = (region_h - sh) / 2.0;
        if room_x < -EPS || room_y < -EPS {
            continue;
        }
        let kx = libm::floor((room_x + EPS) / stride) as i64;
        let ky = libm::floor((room_y + EPS) / stride) as i64;
        for iy in -ky..=ky {
            for ix in -kx..=kx {
                out.push(BoundingBox {
                    cx: anchor.cx + ix as f64 * stride,
                    cy: anchor.cy + iy as f64 * stride,
                    w: sw,
                    h: sh,
                    ..anchor
                });
            }
        }
    }
    let Some((fw, fh)) = cfg.frame_size else { return out };
    let frame = BoundingBox { frame: anchor.frame, cx: fw / 2.0, cy: fh / 2.0, w: fw, h: fh };
    let inside: Vec<BoundingBox> = out.iter().copied().filter(|b| frame.contains(b, EPS)).collect();
    if !inside.is_empty() {
        return inside;
    }
    let centered: Vec<BoundingBox> =
        out.iter().copied().filter(|b| b.cx >= 0.0 && b.cx <= fw && b.cy >= 0.0 && b.cy <= fh).collect();
    if centered.is_empty() {
        out
    } else {
        centered
    }
}

/// Random boxes around `center` with IoU below `max_iou`.
///
/// Offsets are uniform within half the box size on each axis. Sampling gives
/// up after `16 * count` attempts.
pub fn sample_negatives(center: &BoundingBox, count: usize, max_iou: f64, rng: &mut impl Rng) -> Vec<BoundingBox> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count * 16 {
        if out.len() == count {
            break;
        }
        let dx = rng.random_range(-0.5..=0.5) * center.w;
        let dy = rng.random_range(-0.5..=0.5) * center.h;
        let cand = center.translated(dx, dy);
        if iou(&cand, center) < max_iou {
            out.push(cand);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    pub windows: WindowConfig,
    /// Gaps longer than this many frames are left open.
    pub max_gap: usize,
    pub classifier: ClassifierConfig,
    pub negatives_per_positive: usize,
    /// Sampled negatives must overlap their positive less than this.
    pub negative_iou: f64,
    pub seed: u64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            windows: WindowConfig::default(),
            max_gap: 30,
            classifier: ClassifierConfig::default(),
            negatives_per_positive: 8,
            negative_iou: 0.3,
            seed: 0,
        }
    }
}

/// Initial detector for a track: its detected boxes are positives; other
/// detections on the same frames and sampled low-overlap boxes around each
/// positive are negatives.
pub fn initial_classifier(
    track: &Track,
    video: &Video,
    appearance: &dyn Appearance,
    cfg: &CompletionConfig,
) -> Result<OnlineClassifier> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for e in track.entries() {
        let Some(id) = e.detection else { continue };
        let det =
            video.get(id).ok_or_else(|| Error::InvalidPath(format!("unknown detection {}:{}", id.frame, id.index)))?;
        positives.push(det.appearance());
        for (index, other) in video.frames[id.frame as usize].iter().enumerate() {
            if index as u32 != id.index && iou(&other.bbox, &det.bbox) < cfg.negative_iou {
                negatives.push(other.appearance());
            }
        }
        for b in sample_negatives(&det.bbox, cfg.negatives_per_positive, cfg.negative_iou, &mut rng) {
            negatives.push(appearance.describe(&b));
        }
    }
    OnlineClassifier::fit(positives, negatives, cfg.classifier)
}

/// Outcome of [`complete_track`].
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub track: Track,
    /// Missing ranges longer than `max_gap` that were not filled.
    pub open_gaps: Vec<(u32, u32)>,
    pub filled: usize,
}

/// Fills the gaps between the track's first and last frame.
///
/// `shifts[t]` is the displacement of the actor from frame `t` to `t + 1`;
/// missing entries mean no motion.
pub fn complete_track(
    track: &Track,
    cfg: &CompletionConfig,
    classifier: &mut OnlineClassifier,
    shifts: Option<&BTreeMap<u32, (f64, f64)>>,
    appearance: &dyn Appearance,
) -> Result<Completion> {
    complete_track_span(track, (track.first_frame(), track.last_frame()), cfg, classifier, shifts, appearance)
}

/// Like [`complete_track`], but fills every frame of `span`. Frames before
/// the first known box are filled backward in time, frames after the last
/// forward.
pub fn complete_track_span(
    track: &Track,
    span: (u32, u32),
    cfg: &CompletionConfig,
    classifier: &mut OnlineClassifier,
    shifts: Option<&BTreeMap<u32, (f64, f64)>>,
    appearance: &dyn Appearance,
) -> Result<Completion> {
    if span.0 > track.first_frame() || span.1 < track.last_frame() {
        return Err(Error::InvalidConfig(format!(
            "span {}..={} does not cover the track {}..={}",
            span.0,
            span.1,
            track.first_frame(),
            track.last_frame()
        )));
    }
    let shift_at = |t: u32| shifts.and_then(|s| s.get(&t).copied()).unwrap_or((0.0, 0.0));
    let mut filler =
        Filler { cfg, classifier, appearance, rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15) };
    let mut known: BTreeMap<u32, TrackEntry> = track.entries().iter().map(|e| (e.frame(), *e)).collect();
    let mut open_gaps = Vec::new();
    let mut filled = 0;

    // leading frames, backward in time
    let first = track.first_frame();
    if first > span.0 {
        if (first - span.0) as usize > cfg.max_gap {
            open_gaps.push((span.0, first - 1));
        } else {
            let mut prev = known[&first].bbox;
            for t in (span.0..first).rev() {
                let (dx, dy) = shift_at(t);
                prev = filler.step(&prev, t, (-dx, -dy))?;
                known.insert(t, completed(prev));
                filled += 1;
            }
        }
    }

    // interior gaps and trailing frames, forward in time
    let mut ranges = track.gaps();
    if span.1 > track.last_frame() {
        ranges.push((track.last_frame() + 1, span.1));
    }
    for (lo, hi) in ranges {
        if (hi - lo + 1) as usize > cfg.max_gap {
            open_gaps.push((lo, hi));
            continue;
        }
        let mut prev = known[&(lo - 1)].bbox;
        for t in lo..=hi {
            prev = filler.step(&prev, t, shift_at(t - 1))?;
            known.insert(t, completed(prev));
            filled += 1;
        }
    }

    let track = Track::new(known.into_values().collect())?;
    Ok(Completion { track, open_gaps, filled })
}

fn completed(bbox: BoundingBox) -> TrackEntry {
    TrackEntry { bbox, source: BoxSource::Completed, actionness: None, detection: None }
}

struct Filler<'a> {
    cfg: &'a CompletionConfig,
    classifier: &'a mut OnlineClassifier,
    appearance: &'a dyn Appearance,
    rng: ChaCha8Rng,
}

impl Filler<'_> {
    /// Picks the best window on frame `t` starting from `prev`, then feeds it
    /// back to the detector.
    fn step(&mut self, prev: &BoundingBox, t: u32, shift: (f64, f64)) -> Result<BoundingBox> {
        let start = prev.at_frame(t);
        let anchor = start.translated(shift.0, shift.1);
        let windows = generate_search_windows(&start, shift, &self.cfg.windows);
        let mut best: Option<(BoundingBox, f64, f64)> = None;
        for w in windows {
            let s = self.classifier.score(&self.appearance.describe(&w));
            let closeness = iou(&w, &anchor);
            let better = match best {
                None => true,
                Some((_, bs, bc)) => {
                    let tol = 1e-12 * bs.abs().max(1.0);
                    s > bs + tol || ((s - bs).abs() <= tol && closeness > bc)
                }
            };
            if better {
                best = Some((w, s, closeness));
            }
        }
        let (chosen, _, _) = best.ok_or_else(|| Error::InvalidConfig("no scan windows".into()))?;
        let negatives =
            sample_negatives(&chosen, self.cfg.negatives_per_positive, self.cfg.negative_iou, &mut self.rng)
                .iter()
                .map(|b| self.appearance.describe(b))
                .collect();
        self.classifier.update(vec![self.appearance.describe(&chosen)], negatives)?;
        Ok(chosen)
    }
}
