//! IO, orchestration, and reporting around `signbench-core`: manifest and
//! image files, dataset validation, synthetic datasets, the experiment
//! harness, and CSV/JSON ingestion for the stats tooling. The `signbench`
//! binary is a thin CLI over these modules.

pub mod error;
pub mod harness;
pub mod image_io;
pub mod manifest_io;
pub mod render;
pub mod stats_io;
pub mod synth;
pub mod validate;

pub use error::{BenchError, Result};
