//! Thin facade over `libm` plus the couple of numeric conventions shared by
//! every module: all float math funnels through here so results do not depend
//! on platform intrinsics or on whether `std` is enabled.

#![allow(dead_code)]

pub use libm::{ceil, cos, exp, fabs, floor, log, round, sin, sqrt, tan};

/// Round half away from zero, then clamp to the `u8` range.
///
/// This is the single quantization rule for every float-to-pixel conversion
/// in the crate (resampling, warps, intensity scaling, compositing).
#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    let r = round(v);
    if r <= 0.0 {
        0
    } else if r >= 255.0 {
        255
    } else {
        r as u8
    }
}

#[inline]
pub fn clamp_f64(v: f64, lo: f64, hi: f64) -> f64 {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

pub const PI: f64 = core::f64::consts::PI;

#[inline]
pub fn to_radians(deg: f64) -> f64 {
    deg * (PI / 180.0)
}
