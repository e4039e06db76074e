//! Duration gate and ranking of completed tracks.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::completion::Track;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProposal {
    pub video: String,
    pub track: Track,
    /// Summed actionness of the detected boxes.
    pub score: f64,
}

impl ActionProposal {
    pub fn duration(&self) -> usize {
        self.track.span()
    }

    pub fn start_frame(&self) -> u32 {
        self.track.first_frame()
    }

    pub fn end_frame(&self) -> u32 {
        self.track.last_frame()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmitConfig {
    pub min_duration: usize,
    /// Require `duration > min_duration` instead of `>=`.
    pub strict: bool,
}

impl Default for EmitConfig {
    fn default() -> Self {
        Self { min_duration: 20, strict: false }
    }
}

impl EmitConfig {
    pub fn accepts(&self, duration: usize) -> bool {
        if self.strict {
            duration > self.min_duration
        } else {
            duration >= self.min_duration
        }
    }
}

/// Keeps contiguous runs long enough to count as proposals, ordered by score
/// descending (stable).
pub fn emit_proposals(video: &str, tracks: &[Track], cfg: &EmitConfig) -> Vec<ActionProposal> {
    let mut out: Vec<ActionProposal> = tracks
        .iter()
        .flat_map(Track::contiguous_runs)
        .filter(|t| cfg.accepts(t.span()))
        .map(|track| ActionProposal { video: video.into(), score: track.detected_score(), track })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out
}
