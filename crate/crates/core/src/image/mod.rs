//! Interleaved 8-bit image buffers, binary PPM/PGM codecs, and bilinear
//! resampling.
//!
//! Coordinates are pixel indices: pixel `(x, y)` sits exactly at continuous
//! coordinate `(x, y)`, so sampling at integer coordinates reproduces stored
//! bytes. All float-to-byte conversions round half away from zero.

mod ppm;

pub use ppm::{decode_pgm, decode_ppm, encode_pgm, encode_ppm};

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageError {
    /// Width or height of zero.
    ZeroDimension,
    /// Buffer length does not match `width * height * channels`.
    DataSize { expected: usize, got: usize },
    /// Not a P6 (PPM) or P5 (PGM) header where one was required.
    BadMagic,
    /// Header present but unparseable (bad integer, absurd size, missing field).
    BadHeader(&'static str),
    /// Only 8-bit images are supported.
    UnsupportedMaxval(u64),
    /// Pixel payload shorter than the header promises.
    Truncated { expected: usize, got: usize },
    /// Box does not name a nonempty region inside the image.
    BoxOutOfBounds,
    /// Two buffers that must share dimensions do not.
    DimensionMismatch,
}

impl core::fmt::Display for ImageError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ImageError::ZeroDimension => write!(f, "image dimensions must be at least 1x1"),
            ImageError::DataSize { expected, got } => {
                write!(f, "pixel buffer holds {got} bytes, expected {expected}")
            }
            ImageError::BadMagic => write!(f, "not a binary PPM/PGM (bad magic)"),
            ImageError::BadHeader(what) => write!(f, "malformed PNM header: {what}"),
            ImageError::UnsupportedMaxval(v) => {
                write!(f, "unsupported maxval {v}, only 255 is accepted")
            }
            ImageError::Truncated { expected, got } => {
                write!(f, "pixel payload truncated: {got} of {expected} bytes")
            }
            ImageError::BoxOutOfBounds => write!(f, "box lies outside the image or is empty"),
            ImageError::DimensionMismatch => write!(f, "buffers differ in dimensions"),
        }
    }
}

impl core::error::Error for ImageError {}

/// RGB8 image, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension);
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImageError::DataSize { expected, got: data.len() });
        }
        Ok(Image { width, height, data })
    }

    /// Image of constant color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension);
        }
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Ok(Image { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    /// Panics if out of bounds; bounds are the caller's contract here.
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    /// Per-channel mean over the whole image.
    pub fn mean_rgb(&self) -> [f64; 3] {
        let mut acc = [0.0f64; 3];
        for px in self.data.chunks_exact(3) {
            acc[0] += px[0] as f64;
            acc[1] += px[1] as f64;
            acc[2] += px[2] as f64;
        }
        let n = (self.width as usize * self.height as usize) as f64;
        [acc[0] / n, acc[1] / n, acc[2] / n]
    }
}

/// Single-channel 8-bit mask; 0 is background, 255 is foreground, values
/// between blend linearly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension);
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(ImageError::DataSize { expected, got: data.len() });
        }
        Ok(Mask { width, height, data })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension);
        }
        Ok(Mask { width, height, data: vec![value; width as usize * height as usize] })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn value(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Foreground fraction at `(x, y)` in `[0, 1]`.
    #[inline]
    pub fn alpha(&self, x: u32, y: u32) -> f64 {
        self.value(x, y) as f64 / 255.0
    }
}

/// Axis-aligned pixel rectangle, half-open: covers columns `x0..x1` and rows
/// `y0..y1`. Serializes as the 4-element array `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct PixelBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl From<[u32; 4]> for PixelBox {
    fn from(v: [u32; 4]) -> Self {
        PixelBox { x0: v[0], y0: v[1], x1: v[2], y1: v[3] }
    }
}

impl From<PixelBox> for [u32; 4] {
    fn from(b: PixelBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl PixelBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        PixelBox { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    /// True when the box names a nonempty region fully inside a
    /// `width` x `height` image.
    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        !self.is_empty() && self.x1 <= width && self.y1 <= height
    }

    /// Largest sub-box inside `width` x `height`; `None` when nothing is left.
    pub fn clipped_to(&self, width: u32, height: u32) -> Option<PixelBox> {
        let b = PixelBox {
            x0: self.x0.min(width),
            y0: self.y0.min(height),
            x1: self.x1.min(width),
            y1: self.y1.min(height),
        };
        if b.is_empty() {
            None
        } else {
            Some(b)
        }
    }
}

/// What a resampler reads outside the source image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FillMode {
    /// A constant color; black reproduces the usual dark border.
    Constant([u8; 3]),
    /// Repeat the nearest edge pixel.
    ClampToEdge,
}

impl Default for FillMode {
    fn default() -> Self {
        FillMode::Constant([0, 0, 0])
    }
}

#[inline]
fn fetch(img: &Image, ix: i64, iy: i64, fill: FillMode) -> [f64; 3] {
    let w = img.width() as i64;
    let h = img.height() as i64;
    let inside = ix >= 0 && iy >= 0 && ix < w && iy < h;
    let px = if inside {
        img.pixel(ix as u32, iy as u32)
    } else {
        match fill {
            FillMode::Constant(c) => c,
            FillMode::ClampToEdge => {
                let cx = ix.clamp(0, w - 1) as u32;
                let cy = iy.clamp(0, h - 1) as u32;
                img.pixel(cx, cy)
            }
        }
    };
    [px[0] as f64, px[1] as f64, px[2] as f64]
}

/// Bilinear sample at continuous pixel coordinates `(x, y)`.
///
/// Integer coordinates inside the image reproduce the stored pixel exactly;
/// out-of-range reads use `fill`.
pub fn sample_bilinear(img: &Image, x: f64, y: f64, fill: FillMode) -> [f64; 3] {
    let fx = math::floor(x);
    let fy = math::floor(y);
    let tx = x - fx;
    let ty = y - fy;
    let ix = fx as i64;
    let iy = fy as i64;

    let p00 = fetch(img, ix, iy, fill);
    let p10 = fetch(img, ix + 1, iy, fill);
    let p01 = fetch(img, ix, iy + 1, fill);
    let p11 = fetch(img, ix + 1, iy + 1, fill);

    let w00 = (1.0 - tx) * (1.0 - ty);
    let w10 = tx * (1.0 - ty);
    let w01 = (1.0 - tx) * ty;
    let w11 = tx * ty;

    [
        p00[0] * w00 + p10[0] * w10 + p01[0] * w01 + p11[0] * w11,
        p00[1] * w00 + p10[1] * w10 + p01[1] * w01 + p11[1] * w11,
        p00[2] * w00 + p10[2] * w10 + p01[2] * w01 + p11[2] * w11,
    ]
}

/// Bilinear resize with half-pixel center alignment: destination pixel
/// `(x, y)` reads source coordinate `(x + 0.5) * sw / dw - 0.5`, clamped to
/// the valid range. Resizing to the same dimensions is byte-identical.
pub fn resize_bilinear(img: &Image, width: u32, height: u32) -> Result<Image, ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension);
    }
    let sx = img.width() as f64 / width as f64;
    let sy = img.height() as f64 / height as f64;
    let max_x = (img.width() - 1) as f64;
    let max_y = (img.height() - 1) as f64;

    let mut data = Vec::with_capacity(width as usize * height as usize * 3);
    for y in 0..height {
        let src_y = math::clamp_f64((y as f64 + 0.5) * sy - 0.5, 0.0, max_y);
        for x in 0..width {
            let src_x = math::clamp_f64((x as f64 + 0.5) * sx - 0.5, 0.0, max_x);
            let rgb = sample_bilinear(img, src_x, src_y, FillMode::ClampToEdge);
            data.push(math::quantize_u8(rgb[0]));
            data.push(math::quantize_u8(rgb[1]));
            data.push(math::quantize_u8(rgb[2]));
        }
    }
    Image::new(width, height, data)
}

/// Copy the region `bx` out of `img`. The box must be nonempty and fully
/// inside the image.
pub fn crop(img: &Image, bx: PixelBox) -> Result<Image, ImageError> {
    if !bx.fits_in(img.width(), img.height()) {
        return Err(ImageError::BoxOutOfBounds);
    }
    let mut data = Vec::with_capacity(bx.width() as usize * bx.height() as usize * 3);
    for y in bx.y0..bx.y1 {
        let start = img.offset(bx.x0, y);
        let end = img.offset(bx.x1, y);
        data.extend_from_slice(&img.data[start..end]);
    }
    Image::new(bx.width(), bx.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker2() -> Image {
        // 2x2: white, black / black, white on the red channel only would be
        // asymmetric; use full white/black.
        Image::new(2, 2, vec![0, 0, 0, 255, 255, 255, 255, 255, 255, 0, 0, 0]).unwrap()
    }

    #[test]
    fn new_rejects_zero_and_bad_length() {
        assert_eq!(Image::new(0, 4, vec![]), Err(ImageError::ZeroDimension));
        assert_eq!(
            Image::new(2, 1, vec![1, 2, 3]),
            Err(ImageError::DataSize { expected: 6, got: 3 })
        );
    }

    #[test]
    fn sample_at_integer_coords_is_exact() {
        let img = checker2();
        for y in 0..2 {
            for x in 0..2 {
                let px = img.pixel(x, y);
                let s = sample_bilinear(&img, x as f64, y as f64, FillMode::default());
                assert_eq!([s[0] as u8, s[1] as u8, s[2] as u8], px);
            }
        }
    }

    #[test]
    fn sample_center_of_checker_averages() {
        let img = checker2();
        let s = sample_bilinear(&img, 0.5, 0.5, FillMode::default());
        for c in s {
            assert!((c - 127.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_far_outside_uses_fill() {
        let img = checker2();
        let s = sample_bilinear(&img, -5.0, -5.0, FillMode::Constant([9, 9, 9]));
        assert_eq!(s, [9.0, 9.0, 9.0]);
        let e = sample_bilinear(&img, -5.0, 0.0, FillMode::ClampToEdge);
        assert_eq!(e, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn resize_identity_is_byte_identical() {
        let img = checker2();
        let out = resize_bilinear(&img, 2, 2).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn resize_checker_to_single_pixel_averages_to_128() {
        // Mixing weights are symmetric, the mean is 127.5, and the rule
        // rounds half away from zero.
        let img = checker2();
        let out = resize_bilinear(&img, 1, 1).unwrap();
        assert_eq!(out.pixel(0, 0), [128, 128, 128]);
    }

    #[test]
    fn resize_rejects_zero_target() {
        let img = checker2();
        assert_eq!(resize_bilinear(&img, 0, 2), Err(ImageError::ZeroDimension));
    }

    #[test]
    fn crop_matches_pixels() {
        let mut img = Image::filled(4, 3, [0, 0, 0]).unwrap();
        img.set_pixel(2, 1, [10, 20, 30]);
        let c = crop(&img, PixelBox::new(2, 1, 4, 3)).unwrap();
        assert_eq!(c.width(), 2);
        assert_eq!(c.height(), 2);
        assert_eq!(c.pixel(0, 0), [10, 20, 30]);
    }

    #[test]
    fn crop_rejects_out_of_bounds_and_empty() {
        let img = Image::filled(4, 3, [0, 0, 0]).unwrap();
        assert_eq!(crop(&img, PixelBox::new(0, 0, 5, 3)), Err(ImageError::BoxOutOfBounds));
        assert_eq!(crop(&img, PixelBox::new(2, 2, 2, 3)), Err(ImageError::BoxOutOfBounds));
    }

    #[test]
    fn clip_box() {
        let b = PixelBox::new(2, 2, 10, 10);
        assert_eq!(b.clipped_to(5, 5), Some(PixelBox::new(2, 2, 5, 5)));
        assert_eq!(b.clipped_to(2, 5), None);
    }
}
