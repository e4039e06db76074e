//! Pipeline configuration, read from a JSON document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tubelink_core::actionness::EmConfig;
use tubelink_core::completion::{ClassifierConfig, WindowConfig};
use tubelink_core::{AssocConfig, CompletionConfig, EmitConfig, LinkConfig, SearchConfig};

use crate::error::{Error, Result};

/// Every tunable of the pipeline. Missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Weight of the motion score in actionness.
    pub lambda_p: f64,
    /// Weight of the gradient histogram in appearance distances.
    pub lambda_a: f64,
    /// Minimum IoU for two boxes to link.
    pub eta_o: f64,
    /// Maximum appearance distance for two boxes to link.
    pub eta_f: f64,
    /// Maximum overlap between two paths of one set.
    pub eta_p: f64,
    /// Paths per set.
    pub max_paths: usize,
    pub pool_size: usize,
    pub min_path_duration: usize,
    pub min_proposal_duration: usize,
    /// Gate proposals with `>` instead of `>=`.
    pub strict_duration: bool,
    pub use_similarity: bool,
    pub similarity_cap: f64,
    /// IoU threshold for recall.
    pub eval_eta: f64,
    pub max_gap: usize,
    pub windows: WindowConfig,
    pub classifier: ClassifierConfig,
    pub negatives_per_positive: usize,
    pub negative_iou: f64,
    pub gmm_components: usize,
    pub gmm_max_iterations: usize,
    pub gmm_tolerance: f64,
    /// Master seed; every randomized stage derives its seed from it.
    pub seed: u64,
    /// Worker threads for per-video processing; 0 picks the core count.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let link = LinkConfig::default();
        let assoc = AssocConfig::default();
        let completion = CompletionConfig::default();
        Self {
            lambda_p: 1.0,
            lambda_a: link.lambda_a,
            eta_o: link.iou_threshold,
            eta_f: link.appearance_threshold,
            eta_p: assoc.overlap_threshold,
            max_paths: assoc.max_paths,
            pool_size: SearchConfig::default().pool_size,
            min_path_duration: assoc.min_path_duration,
            min_proposal_duration: EmitConfig::default().min_duration,
            strict_duration: false,
            use_similarity: assoc.use_similarity,
            similarity_cap: assoc.similarity_cap,
            eval_eta: 0.5,
            max_gap: completion.max_gap,
            windows: completion.windows,
            classifier: completion.classifier,
            negatives_per_positive: completion.negatives_per_positive,
            negative_iou: completion.negative_iou,
            gmm_components: 2,
            gmm_max_iterations: EmConfig::default().max_iterations,
            gmm_tolerance: EmConfig::default().tolerance,
            seed: 0,
            threads: 0,
        }
    }
}

fn check(ok: bool, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(message.to_string()))
    }
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::parse(&path.display().to_string(), e.line(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.lambda_p.is_finite() && self.lambda_p >= 0.0, "lambda_p must be non-negative")?;
        check(self.lambda_a.is_finite() && self.lambda_a >= 0.0, "lambda_a must be non-negative")?;
        check(unit(self.eta_o), "eta_o must lie in [0, 1]")?;
        check(self.eta_f.is_finite() && self.eta_f >= 0.0, "eta_f must be non-negative")?;
        check(unit(self.eta_p), "eta_p must lie in [0, 1]")?;
        check(self.max_paths >= 1, "max_paths must be at least 1")?;
        check(self.max_paths <= self.pool_size, "max_paths must not exceed pool_size")?;
        check(self.min_proposal_duration >= 1, "min_proposal_duration must be at least 1")?;
        check(self.similarity_cap > 0.0, "similarity_cap must be positive")?;
        check(self.eval_eta > 0.0 && self.eval_eta <= 1.0, "eval_eta must lie in (0, 1]")?;
        check(!self.windows.scales.is_empty(), "at least one window scale is required")?;
        check(self.windows.scales.iter().all(|s| *s > 0.0), "window scales must be positive")?;
        check(self.windows.region_scale > 0.0, "windows.region_scale must be positive")?;
        check(self.windows.stride_fraction > 0.0, "windows.stride_fraction must be positive")?;
        check(self.classifier.learning_rate > 0.0, "classifier.learning_rate must be positive")?;
        check(self.classifier.regularization >= 0.0, "classifier.regularization must be non-negative")?;
        check(unit(self.negative_iou), "negative_iou must lie in [0, 1]")?;
        check(self.gmm_components >= 1, "gmm_components must be at least 1")?;
        check(self.gmm_tolerance >= 0.0, "gmm_tolerance must be non-negative")?;
        Ok(())
    }

    pub fn link(&self) -> LinkConfig {
        LinkConfig { iou_threshold: self.eta_o, appearance_threshold: self.eta_f, lambda_a: self.lambda_a }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig { link: self.link(), pool_size: self.pool_size }
    }

    pub fn association(&self) -> AssocConfig {
        AssocConfig {
            max_paths: self.max_paths,
            overlap_threshold: self.eta_p,
            lambda_a: self.lambda_a,
            similarity_cap: self.similarity_cap,
            use_similarity: self.use_similarity,
            min_path_duration: self.min_path_duration,
        }
    }

    /// Completion settings for the `k`-th track of a video.
    pub fn completion(&self, k: usize) -> CompletionConfig {
        let seed = self.seed.wrapping_add(k as u64);
        CompletionConfig {
            windows: self.windows.clone(),
            max_gap: self.max_gap,
            classifier: ClassifierConfig { seed, ..self.classifier },
            negatives_per_positive: self.negatives_per_positive,
            negative_iou: self.negative_iou,
            seed,
        }
    }

    pub fn emit(&self) -> EmitConfig {
        EmitConfig { min_duration: self.min_proposal_duration, strict: self.strict_duration }
    }

    pub fn em(&self) -> EmConfig {
        EmConfig {
            components: self.gmm_components,
            seed: self.seed,
            max_iterations: self.gmm_max_iterations,
            tolerance: self.gmm_tolerance,
            ..EmConfig::default()
        }
    }
}
