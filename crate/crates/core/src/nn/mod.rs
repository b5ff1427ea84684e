//! A small from-scratch CNN stack: tensors, the handful of layers the bench
//! needs, the multi-stream classifier with its freeze schedule, training,
//! evaluation, gradient checking, and a binary checkpoint format.
//!
//! Everything is generic over the scalar type: `f32` is the storage type for
//! real training and checkpoints, `f64` exists so gradient checks can compare
//! analytic and numeric derivatives without float32 noise. Reductions
//! accumulate in `f64` regardless of storage.

mod checkpoint;
mod gradcheck;
mod layers;
mod model;
mod scalar;
mod tensor;
mod train;

pub use checkpoint::{from_bytes, to_bytes, CheckpointError};
pub use gradcheck::gradient_check;
pub use layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, gap_backward, gap_forward,
    maxpool2_backward, maxpool2_forward, relu_backward, relu_forward, softmax_ce_backward,
    softmax_ce_forward, Conv2d, Dense,
};
pub use model::{
    build_model, Batch, Gradients, ModelCache, ModelConfig, ModelKind, MultiStreamModel,
    StreamBackbone,
};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use train::{
    evaluate, frames_with_tag, train, DataSplit, EpochStats, EvalResult, FrameItem,
    ImageProvider, MemoryProvider, PhaseConfig, TrainConfig, TrainPhase,
};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq)]
pub enum NnError {
    /// Tensor shapes disagree with what the op or model expects.
    ShapeMismatch(String),
    /// Stream input resolution too small for the configured blocks.
    BadResolution { resolution: u32, detail: &'static str },
    /// The named split has no frames.
    EmptySplit(&'static str),
    /// Evaluation set is empty.
    EmptySet,
    /// Loss went NaN/Inf; training aborts rather than continue on garbage.
    DivergedLoss { epoch: usize, loss: f64 },
    /// The image provider could not produce a frame.
    Provider { path: String, detail: String },
    /// A training configuration field violates its invariant.
    BadConfig(&'static str),
}

impl core::fmt::Display for NnError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            NnError::ShapeMismatch(detail) => write!(f, "shape mismatch: {detail}"),
            NnError::BadResolution { resolution, detail } => {
                write!(f, "resolution {resolution} unusable: {detail}")
            }
            NnError::EmptySplit(which) => write!(f, "split \"{which}\" has no frames"),
            NnError::EmptySet => write!(f, "evaluation set is empty"),
            NnError::DivergedLoss { epoch, loss } => {
                write!(f, "loss diverged to {loss} in epoch {epoch}")
            }
            NnError::Provider { path, detail } => write!(f, "cannot load \"{path}\": {detail}"),
            NnError::BadConfig(detail) => write!(f, "bad training config: {detail}"),
        }
    }
}

impl core::error::Error for NnError {}
