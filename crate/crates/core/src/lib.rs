//! Detector-agnostic action proposal generation.
//!
//! Per-frame scored boxes go in, spatio-temporally continuous action proposals
//! come out. The stages are:
//!
//! 1. [`actionness`]: human score plus a GMM likelihood-ratio motion score.
//! 2. [`search`]: forward search over linkable boxes with a top-N candidate
//!    pool, then a backward trace that recovers each candidate path.
//! 3. [`association`]: greedy maximum-coverage selection of path sets under a
//!    cardinality cap and a pairwise path-overlap constraint.
//! 4. [`completion`]: gap filling with a linear detector that is retrained
//!    online as frames are filled.
//! 5. [`proposal`]: duration gate and ranking.
//!
//! [`evaluation`] scores proposals against ground truth, [`synth`] builds
//! seeded synthetic scenes, and [`oracle`] holds exhaustive reference solvers
//! for small instances.
//!
//! The crate is `no_std` and needs only `alloc`.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod actionness;
pub mod association;
pub mod completion;
pub mod detection;
mod error;
pub mod evaluation;
pub mod geometry;
mod math;
pub mod oracle;
pub mod path;
pub mod proposal;
pub mod search;
pub mod synth;

pub use actionness::{fit_gmm, gmm_density, motion_score, GmmComponent, GmmModel, MotionModel};
pub use association::{extract_all_path_sets, greedy_associate, path_similarity, AssocConfig, PathSet};
pub use completion::{
    complete_track, generate_search_windows, train_classifier, Appearance, BoxSource, CompletionConfig,
    OnlineClassifier, Track, TrackEntry,
};
pub use detection::{Detection, DetectionRef, FeatureHistogram, Video};
pub use error::{Error, Result};
pub use evaluation::{abo_mabo, recall_at, track_iou, GroundTruthTrack};
pub use geometry::{iou, BoundingBox};
pub use math::sigmoid;
pub use path::{path_overlap, ActionPath};
pub use proposal::{emit_proposals, ActionProposal, EmitConfig};
pub use search::{forward_backward_search, linkable, LinkConfig, SearchConfig};
