//! File formats, configuration, the pipeline runner and the CLI around
//! `tubelink-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;

pub use config::PipelineConfig;
pub use error::{Error, Result, Stage};
pub use pipeline::{process_video, run_pipeline, PipelineOutput, VideoOutput};
