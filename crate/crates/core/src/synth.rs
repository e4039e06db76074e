//! Seeded synthetic scenes: moving actors with known ground truth, detector
//! noise, dropouts and clutter.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::completion::{uniform_background, MixtureAppearance};
use crate::detection::{Detection, FeatureHistogram, Video};
use crate::error::{Error, Result};
use crate::evaluation::GroundTruthTrack;
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    /// Constant velocity in pixels per frame.
    Linear { vx: f64, vy: f64 },
    /// Constant velocity plus a vertical sinusoid.
    Sinusoidal { vx: f64, vy: f64, amplitude: f64, period: f64 },
}

impl Motion {
    fn offset(&self, t: f64) -> (f64, f64) {
        match *self {
            Motion::Linear { vx, vy } => (vx * t, vy * t),
            Motion::Sinusoidal { vx, vy, amplitude, period } => {
                let wave = amplitude * libm::sin(2.0 * core::f64::consts::PI * t / period);
                (vx * t, vy * t + wave)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub label: String,
    /// Center at `start_frame`.
    pub center: (f64, f64),
    /// `(w, h)` at `start_frame`.
    pub size: (f64, f64),
    pub motion: Motion,
    /// Relative size change per frame.
    #[serde(default)]
    pub size_drift: f64,
    pub color: Vec<f64>,
    pub grad: Vec<f64>,
    #[serde(default)]
    pub start_frame: u32,
    /// Last visible frame; defaults to the end of the video.
    #[serde(default)]
    pub end_frame: Option<u32>,
    #[serde(default = "default_human_score")]
    pub human_score: f64,
    /// Inclusive frame ranges in which the detector misses this actor.
    #[serde(default)]
    pub forced_gaps: Vec<(u32, u32)>,
}

fn default_human_score() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Standard deviation of the detected center, in pixels.
    pub center_jitter: f64,
    /// Standard deviation of the relative size error.
    pub scale_jitter: f64,
    /// Probability that an actor is missed on a frame.
    pub dropout: f64,
    pub clutter_per_frame: usize,
    /// Standard deviation added to actor human scores.
    pub score_noise: f64,
    /// Standard deviation added to every histogram bin before renormalizing.
    pub appearance_noise: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            center_jitter: 0.0,
            scale_jitter: 0.0,
            dropout: 0.0,
            clutter_per_frame: 0,
            score_noise: 0.0,
            appearance_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub frames: u32,
    #[serde(default = "default_video")]
    pub video: String,
    /// `(width, height)` in pixels.
    pub frame_size: (f64, f64),
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_motion_dim")]
    pub motion_dim: usize,
}

fn default_video() -> String {
    "synthetic".into()
}

fn default_motion_dim() -> usize {
    8
}

/// Peaked histogram prototype with most mass on bins `peak` and `peak + 1`.
pub fn peaked_prototype(dim: usize, peak: usize) -> Vec<f64> {
    let mut v = vec![0.3 / dim as f64; dim];
    v[peak % dim] += 0.45;
    v[(peak + 1) % dim] += 0.25;
    v
}

impl ScenarioSpec {
    /// Two actors walking toward each other along nearly the same line.
    pub fn two_actor_crossing(seed: u64) -> Self {
        let actor = |label: &str, x: f64, y: f64, vx: f64, color_peak, grad_peak| ActorSpec {
            label: label.into(),
            center: (x, y),
            size: (40.0, 80.0),
            motion: Motion::Linear { vx, vy: 0.0 },
            size_drift: 0.0,
            color: peaked_prototype(8, color_peak),
            grad: peaked_prototype(8, grad_peak),
            start_frame: 0,
            end_frame: None,
            human_score: 0.9,
            forced_gaps: Vec::new(),
        };
        Self {
            seed,
            frames: 100,
            video: "crossing".into(),
            frame_size: (320.0, 240.0),
            actors: vec![actor("walker", 60.0, 120.0, 2.0, 1, 0), actor("runner", 260.0, 126.0, -2.0, 5, 4)],
            noise: NoiseSpec {
                center_jitter: 2.0,
                scale_jitter: 0.02,
                dropout: 0.1,
                clutter_per_frame: 3,
                score_noise: 0.05,
                appearance_noise: 0.01,
            },
            motion_dim: 8,
        }
    }

    /// One actor drifting across the frame with no noise at all.
    pub fn single_actor(seed: u64, frames: u32) -> Self {
        Self {
            seed,
            frames,
            video: "single".into(),
            frame_size: (320.0, 240.0),
            actors: vec![ActorSpec {
                label: "actor".into(),
                center: (80.0, 120.0),
                size: (40.0, 80.0),
                motion: Motion::Linear { vx: 1.5, vy: 0.5 },
                size_drift: 0.0,
                color: peaked_prototype(8, 2),
                grad: peaked_prototype(8, 6),
                start_frame: 0,
                end_frame: None,
                human_score: 0.9,
                forced_gaps: Vec::new(),
            }],
            noise: NoiseSpec::default(),
            motion_dim: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.frames == 0 {
            return bad("scenario needs at least one frame");
        }
        if !(0.0..=1.0).contains(&self.noise.dropout) {
            return bad("dropout must be a probability");
        }
        if self.noise.center_jitter < 0.0
            || self.noise.scale_jitter < 0.0
            || self.noise.score_noise < 0.0
            || self.noise.appearance_noise < 0.0
        {
            return bad("noise levels must be non-negative");
        }
        if self.motion_dim == 0 {
            return bad("motion histogram dimension must be positive");
        }
        let (fw, fh) = self.frame_size;
        if !(fw > 0.0 && fh > 0.0) {
            return bad("frame size must be positive");
        }
        let color_dim = self.actors.first().map(|a| a.color.len());
        let grad_dim = self.actors.first().map(|a| a.grad.len());
        for a in &self.actors {
            if !(a.size.0 > 0.0 && a.size.1 > 0.0) {
                return bad("actor size must be positive");
            }
            if !(0.0..=1.0).contains(&a.human_score) {
                return bad("actor human score must lie in [0, 1]");
            }
            if Some(a.color.len()) != color_dim || Some(a.grad.len()) != grad_dim {
                return bad("actor histograms must share dimensions");
            }
            FeatureHistogram::normalized(a.color.clone())?;
            FeatureHistogram::normalized(a.grad.clone())?;
        }
        Ok(())
    }

    fn dims(&self) -> (usize, usize) {
        self.actors.first().map(|a| (a.color.len(), a.grad.len())).unwrap_or((8, 8))
    }

    fn actor_end(&self, a: &ActorSpec) -> u32 {
        a.end_frame.unwrap_or(self.frames - 1).min(self.frames - 1)
    }

    /// True box of actor `a` on frame `t`, if visible.
    pub fn truth_box(&self, a: &ActorSpec, t: u32) -> Option<BoundingBox> {
        if t < a.start_frame || t > self.actor_end(a) {
            return None;
        }
        let dt = (t - a.start_frame) as f64;
        let (dx, dy) = a.motion.offset(dt);
        let grow = libm::pow(1.0 + a.size_drift, dt);
        BoundingBox::new(t, a.center.0 + dx, a.center.1 + dy, a.size.0 * grow, a.size.1 * grow).ok()
    }
}

/// A generated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub video: Video,
    pub ground_truth: Vec<GroundTruthTrack>,
    /// Per actor, per frame: whether a detection of the actor was emitted.
    pub detected: Vec<Vec<bool>>,
    /// Actor motion histograms and clutter motion histograms, for fitting the
    /// motion mixtures.
    pub actor_motion: Vec<FeatureHistogram>,
    pub clutter_motion: Vec<FeatureHistogram>,
    appearance: MixtureAppearance,
}

impl Scenario {
    /// Appearance of arbitrary boxes in the scene: actors are visible on every
    /// frame of their span, detected or not.
    pub fn appearance(&self) -> &MixtureAppearance {
        &self.appearance
    }

    /// Number of visible actor frames without a detection.
    pub fn missed_frames(&self, actor: usize) -> usize {
        self.detected[actor].iter().filter(|d| !**d).count()
    }
}

fn noisy_histogram(proto: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> FeatureHistogram {
    let values = proto
        .iter()
        .map(|p| {
            let noise = if sigma > 0.0 { Normal::new(0.0, sigma).expect("sigma > 0").sample(rng) } else { 0.0 };
            (p + noise).max(1e-6)
        })
        .collect();
    FeatureHistogram::normalized(values).expect("positive entries")
}

fn random_histogram(dim: usize, rng: &mut ChaCha8Rng) -> FeatureHistogram {
    FeatureHistogram::normalized((0..dim).map(|_| rng.random_range(0.01..1.0)).collect()).expect("positive entries")
}

fn gaussian(sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("sigma > 0").sample(rng)
    } else {
        0.0
    }
}

/// Builds the scene described by `spec`. Deterministic per seed.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = spec.noise;
    let (color_dim, grad_dim) = spec.dims();
    let moving = peaked_prototype(spec.motion_dim, spec.motion_dim - 2);
    let still = peaked_prototype(spec.motion_dim, 0);

    let mut video = Video::new(spec.video.clone()).with_frame_count(spec.frames as usize);
    let mut detected = vec![vec![false; spec.frames as usize]; spec.actors.len()];
    let mut actor_motion = Vec::new();
    let mut clutter_motion = Vec::new();
    let mut sources: Vec<Vec<(BoundingBox, Vec<f64>)>> = vec![Vec::new(); spec.frames as usize];

    for t in 0..spec.frames {
        for (k, actor) in spec.actors.iter().enumerate() {
            let Some(truth) = spec.truth_box(actor, t) else { continue };
            let mut proto = actor.color.clone();
            proto.extend_from_slice(&actor.grad);
            sources[t as usize].push((truth, normalize_blocks(proto, color_dim)));

            let forced = actor.forced_gaps.iter().any(|&(lo, hi)| (lo..=hi).contains(&t));
            let dropped = rng.random::<f64>() < noise.dropout;
            if forced || dropped {
                continue;
            }
            let cx = truth.cx + gaussian(noise.center_jitter, &mut rng);
            let cy = truth.cy + gaussian(noise.center_jitter, &mut rng);
            let w = (truth.w * (1.0 + gaussian(noise.scale_jitter, &mut rng))).max(1.0);
            let h = (truth.h * (1.0 + gaussian(noise.scale_jitter, &mut rng))).max(1.0);
            let human = (actor.human_score + gaussian(noise.score_noise, &mut rng)).clamp(0.0, 1.0);
            let motion_hist = noisy_histogram(&moving, noise.appearance_noise.max(0.01), &mut rng);
            let color = noisy_histogram(&actor.color, noise.appearance_noise, &mut rng);
            let grad = noisy_histogram(&actor.grad, noise.appearance_noise, &mut rng);
            let next = spec.truth_box(actor, t + 1).or_else(|| t.checked_sub(1).and_then(|p| spec.truth_box(actor, p)));
            let shift = match next {
                Some(n) if n.frame > t => (n.cx - truth.cx, n.cy - truth.cy),
                Some(p) => (truth.cx - p.cx, truth.cy - p.cy),
                None => (0.0, 0.0),
            };
            actor_motion.push(motion_hist.clone());
            let det = Detection::new(BoundingBox::new(t, cx, cy, w, h)?, human, motion_hist, color, grad)?
                .with_shift(shift.0, shift.1);
            video.push(det);
            detected[k][t as usize] = true;
        }
        let (fw, fh) = spec.frame_size;
        for _ in 0..noise.clutter_per_frame {
            let w = rng.random_range(20.0..60.0);
            let h = rng.random_range(20.0..60.0);
            let cx = rng.random_range(w / 2.0..(fw - w / 2.0).max(w / 2.0 + 1e-9));
            let cy = rng.random_range(h / 2.0..(fh - h / 2.0).max(h / 2.0 + 1e-9));
            let human = rng.random_range(0.05..0.3);
            let motion_hist = noisy_histogram(&still, 0.01, &mut rng);
            let color = random_histogram(color_dim, &mut rng);
            let grad = random_histogram(grad_dim, &mut rng);
            clutter_motion.push(motion_hist.clone());
            let det = Detection::new(BoundingBox::new(t, cx, cy, w, h)?, human, motion_hist, color, grad)?;
            sources[t as usize].push((det.bbox, det.appearance()));
            video.push(det);
        }
    }

    let ground_truth = spec
        .actors
        .iter()
        .filter_map(|a| {
            let end = spec.actor_end(a);
            if a.start_frame > end {
                return None;
            }
            let boxes = (a.start_frame..=end).map(|t| spec.truth_box(a, t)).collect();
            GroundTruthTrack::new(spec.video.clone(), a.label.clone(), a.start_frame, boxes).ok()
        })
        .collect();

    let appearance = MixtureAppearance::new(sources, uniform_background(color_dim, grad_dim));
    Ok(Scenario { video, ground_truth, detected, actor_motion, clutter_motion, appearance })
}

fn normalize_blocks(mut v: Vec<f64>, split: usize) -> Vec<f64> {
    let (a, b) = v.split_at_mut(split);
    for block in [a, b] {
        let s: f64 = block.iter().sum();
        block.iter_mut().for_each(|x| *x /= s);
    }
    v
}
