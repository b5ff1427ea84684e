use std::path::{Path, PathBuf};

use signbench_core::augment::AugmentError;
use signbench_core::dataset::DatasetError;
use signbench_core::explain::ExplainError;
use signbench_core::image::ImageError;
use signbench_core::nn::{CheckpointError, NnError};
use signbench_core::stats::StatsError;
use thiserror::Error;

/// Everything the binary can fail with. Exit codes split these into
/// configuration problems (1) and runtime failures (2); see
/// [`BenchError::exit_code`].
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },
    #[error("{0}")]
    Config(String),
    #[error("condition \"{condition}\" has {got} completed runs; comparison needs at least 2")]
    TooFewRuns { condition: String, got: usize },
    #[error("frame \"{image}\" has no mask; background compositing needs one per frame")]
    MissingMask { image: String },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub type Result<T> = std::result::Result<T, BenchError>;

impl BenchError {
    /// 1 for configuration and validation problems the user can fix by
    /// editing inputs; 2 for failures at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_)
            | BenchError::Format { .. }
            | BenchError::TooFewRuns { .. }
            | BenchError::MissingMask { .. }
            | BenchError::Dataset(_)
            | BenchError::Augment(AugmentError::InvalidPolicy(_)) => 1,
            _ => 2,
        }
    }
}

/// Adapter for `fs` calls: `fs::read(p).map_err(io_at(p))`.
pub fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.to_path_buf(), source }
}
