use std::fmt;
use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage, for error reports and timings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Score,
    Search,
    Associate,
    Complete,
    Emit,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Score => "score",
            Stage::Search => "search",
            Stage::Associate => "associate",
            Stage::Complete => "complete",
            Stage::Emit => "emit",
            Stage::Evaluate => "evaluate",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{source_name}:{line}: {message}")]
    Parse { source_name: String, line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage} stage failed for video {video:?}: {source}")]
    Stage { stage: Stage, video: String, source: tubelink_core::Error },

    #[error(transparent)]
    Core(#[from] tubelink_core::Error),

    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(source_name: &str, line: usize, message: impl fmt::Display) -> Self {
        Error::Parse { source_name: source_name.to_string(), line, message: message.to_string() }
    }

    /// Process exit code: 1 for bad input, 2 when an internal invariant broke.
    pub fn exit_code(&self) -> u8 {
        use tubelink_core::Error as E;
        match self {
            Error::Stage { source, .. } | Error::Core(source) => match source {
                E::NonAdjacentLink { .. } | E::MissingActionness { .. } | E::InvalidPath(_) => 2,
                _ => 1,
            },
            Error::Json(_) | Error::Csv(_) => 2,
            _ => 1,
        }
    }
}

pub(crate) trait StageContext<T> {
    fn stage(self, stage: Stage, video: &str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T, tubelink_core::Error> {
    fn stage(self, stage: Stage, video: &str) -> Result<T> {
        self.map_err(|source| Error::Stage { stage, video: video.to_string(), source })
    }
}
