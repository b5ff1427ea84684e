//! Core building blocks for a deterministic sign-language frame classification
//! bench: image buffers and resampling, dataset manifests and splits, affine
//! augmentation, run statistics, a small CNN stack, and patch-occlusion
//! explanations.
//!
//! Everything here is pure computation over in-memory values. File formats,
//! paths, and the command-line surface live in the companion `signbench` crate.
//! The crate is `no_std`-compatible (with `alloc`); all floating-point
//! transcendentals go through `libm` so results are bit-identical across
//! platforms and feature configurations.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod augment;
pub mod dataset;
pub mod explain;
pub mod image;
mod math;
pub mod nn;
pub mod rng;
pub mod stats;

pub use image::{FillMode, Image, Mask, PixelBox};
pub use rng::RngState;
