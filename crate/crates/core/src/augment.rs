//! Training-time augmentation: affine warps (zoom, rotation, shear,
//! translation, height shift), intensity scaling (brightness, per-channel
//! factors), seeded policy sampling, and mask-based background compositing.
//!
//! Affine parameters use the output-to-source convention: warping reads, for
//! every output pixel, the source location the matrix maps it to. Sampled
//! geometric transforms are composed into a single matrix so each augmented
//! image is resampled exactly once.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::image::{sample_bilinear, FillMode, Image, Mask};
use crate::math;
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentError {
    /// Shear angle at or beyond 90 degrees has no finite tangent.
    DegeneratePhi(f64),
    /// Zoom fraction at or below -1 collapses or mirrors the image.
    DegenerateScale(f64),
    /// Brightness and channel factors must be positive.
    NonpositiveFactor(f64),
    /// Composite inputs must share dimensions.
    DimensionMismatch,
    /// No backgrounds to choose from.
    EmptyPool,
    /// A policy field violates its declared range.
    InvalidPolicy(&'static str),
}

impl core::fmt::Display for AugmentError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AugmentError::DegeneratePhi(phi) => write!(f, "shear angle {phi} deg is degenerate"),
            AugmentError::DegenerateScale(s) => write!(f, "zoom fraction {s} is degenerate"),
            AugmentError::NonpositiveFactor(v) => write!(f, "factor {v} must be positive"),
            AugmentError::DimensionMismatch => write!(f, "images and mask differ in dimensions"),
            AugmentError::EmptyPool => write!(f, "background pool is empty"),
            AugmentError::InvalidPolicy(what) => write!(f, "invalid policy: {what}"),
        }
    }
}

impl core::error::Error for AugmentError {}

/// 2x3 affine matrix mapping output pixel coordinates to source coordinates:
/// `(xs, ys) = (a*x + b*y + c, d*x + e*y + f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub m: [f64; 6],
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams { m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0] };

    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b, c, d, e, f] = self.m;
        (a * x + b * y + c, d * x + e * y + f)
    }

    pub fn det(&self) -> f64 {
        self.m[0] * self.m[4] - self.m[1] * self.m[3]
    }

    pub fn is_identity(&self) -> bool {
        self.m == Self::IDENTITY.m
    }
}

/// Rotation by `theta` degrees about `center`, as an inverse map: output
/// `(x, y)` reads source `center + R(-theta) * (x - center)`.
pub fn make_rotation(theta_deg: f64, center: (f64, f64)) -> AffineParams {
    let t = math::to_radians(theta_deg);
    let (s, c) = (math::sin(t), math::cos(t));
    let (cx, cy) = center;
    AffineParams {
        m: [c, s, cx - c * cx - s * cy, -s, c, cy + s * cx - c * cy],
    }
}

/// Horizontal shear: `xs = x + tan(phi) * (y - cy)`, rows stay put.
pub fn make_shear(phi_deg: f64, center: (f64, f64)) -> Result<AffineParams, AugmentError> {
    if !(phi_deg.is_finite() && math::fabs(phi_deg) < 90.0) {
        return Err(AugmentError::DegeneratePhi(phi_deg));
    }
    let t = math::tan(math::to_radians(phi_deg));
    let cy = center.1;
    Ok(AffineParams { m: [1.0, t, -t * cy, 0.0, 1.0, 0.0] })
}

/// Zoom by fraction `s` about `center`: scale factor `1 + s`, so positive `s`
/// magnifies. The inverse map divides by the factor.
pub fn make_zoom(s: f64, center: (f64, f64)) -> Result<AffineParams, AugmentError> {
    let scale = 1.0 + s;
    if !(s.is_finite() && scale > 0.0) {
        return Err(AugmentError::DegenerateScale(s));
    }
    let inv = 1.0 / scale;
    let (cx, cy) = center;
    Ok(AffineParams { m: [inv, 0.0, cx - inv * cx, 0.0, inv, cy - inv * cy] })
}

/// Shift content by `(dx, dy)` pixels; the inverse map subtracts the shift.
pub fn make_translation(dx: f64, dy: f64) -> AffineParams {
    AffineParams { m: [1.0, 0.0, -dx, 0.0, 1.0, -dy] }
}

/// Composition in application order: warping with the result equals warping
/// with `b` first, then with `a`. In the output-to-source convention that is
/// the map `x -> b(a(x))`.
pub fn compose_affine(a: &AffineParams, b: &AffineParams) -> AffineParams {
    let [a0, a1, a2, a3, a4, a5] = a.m;
    let [b0, b1, b2, b3, b4, b5] = b.m;
    AffineParams {
        m: [
            b0 * a0 + b1 * a3,
            b0 * a1 + b1 * a4,
            b0 * a2 + b1 * a5 + b2,
            b3 * a0 + b4 * a3,
            b3 * a1 + b4 * a4,
            b3 * a2 + b4 * a5 + b5,
        ],
    }
}

/// Inverse map, when the linear part is invertible.
pub fn invert_affine(p: &AffineParams) -> Option<AffineParams> {
    let [a, b, c, d, e, f] = p.m;
    let det = a * e - b * d;
    if !det.is_finite() || math::fabs(det) < 1e-12 {
        return None;
    }
    let (ia, ib, id, ie) = (e / det, -b / det, -d / det, a / det);
    Some(AffineParams {
        m: [ia, ib, -(ia * c + ib * f), id, ie, -(id * c + ie * f)],
    })
}

/// Resample `img` through the affine map. Output dimensions equal input
/// dimensions; out-of-source reads use `fill`.
pub fn warp_affine(img: &Image, p: &AffineParams, fill: FillMode) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut data = Vec::with_capacity(w as usize * h as usize * 3);
    for y in 0..h {
        for x in 0..w {
            let (xs, ys) = p.map(x as f64, y as f64);
            let rgb = sample_bilinear(img, xs, ys, fill);
            data.push(math::quantize_u8(rgb[0]));
            data.push(math::quantize_u8(rgb[1]));
            data.push(math::quantize_u8(rgb[2]));
        }
    }
    Image::new(w, h, data).expect("same dimensions as input")
}

/// Multiply every sample by `factor`, rounding half away from zero and
/// clamping to `[0, 255]`.
pub fn adjust_brightness(img: &Image, factor: f64) -> Result<Image, AugmentError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(AugmentError::NonpositiveFactor(factor));
    }
    scale_channels(img, [factor, factor, factor])
}

/// Per-channel multiplicative scaling with the same rounding rule.
pub fn scale_channels(img: &Image, factors: [f64; 3]) -> Result<Image, AugmentError> {
    for f in factors {
        if !(f.is_finite() && f > 0.0) {
            return Err(AugmentError::NonpositiveFactor(f));
        }
    }
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| math::quantize_u8(*v as f64 * factors[i % 3]))
        .collect();
    Ok(Image::new(img.width(), img.height(), data).expect("same dimensions"))
}

/// The transforms a policy can enable.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Zoom,
    Rotation,
    Shear,
    Translation,
    HeightShift,
    Brightness,
    ChannelScale,
}

impl TransformKind {
    pub const ALL: [TransformKind; 7] = [
        TransformKind::Zoom,
        TransformKind::Rotation,
        TransformKind::Shear,
        TransformKind::Translation,
        TransformKind::HeightShift,
        TransformKind::Brightness,
        TransformKind::ChannelScale,
    ];
}

fn default_zoom() -> (f64, f64) {
    (-0.2, 0.2)
}
fn default_rotation() -> (f64, f64) {
    (-30.0, 30.0)
}
fn default_shear() -> (f64, f64) {
    (0.0, 10.0)
}
fn default_true() -> bool {
    true
}
fn default_translation_fraction() -> f64 {
    0.10
}
fn default_brightness() -> (f64, f64) {
    (0.5, 1.2)
}
fn default_height_shift() -> (f64, f64) {
    (0.0, 0.15)
}
fn default_channel_scale() -> (f64, f64) {
    (0.8, 1.2)
}
fn default_enabled() -> BTreeSet<TransformKind> {
    TransformKind::ALL.into_iter().collect()
}

/// Ranges each transform parameter is drawn from.
///
/// Defaults follow the augmentation table this bench reproduces: zoom
/// fraction -0.2..0.2, rotation -30..30 degrees, shear 0..10 degrees,
/// translation up to 10% of each dimension, brightness factor 0.5..1.2,
/// height shift up to 15% of height in either direction, channel factors
/// 0.8..1.2. `height_shift_range` is a magnitude; the direction is a separate
/// coin flip so shifts go both up and down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    #[serde(default = "default_zoom")]
    pub zoom_range: (f64, f64),
    #[serde(default = "default_rotation")]
    pub rotation_range_deg: (f64, f64),
    #[serde(default = "default_shear")]
    pub shear_range_deg: (f64, f64),
    #[serde(default = "default_true")]
    pub translation_enabled: bool,
    #[serde(default = "default_translation_fraction")]
    pub translation_fraction: f64,
    #[serde(default = "default_brightness")]
    pub brightness_range: (f64, f64),
    #[serde(default = "default_height_shift")]
    pub height_shift_range: (f64, f64),
    #[serde(default = "default_channel_scale")]
    pub channel_scale_range: (f64, f64),
    #[serde(default = "default_enabled")]
    pub enabled: BTreeSet<TransformKind>,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        AugmentationPolicy {
            zoom_range: default_zoom(),
            rotation_range_deg: default_rotation(),
            shear_range_deg: default_shear(),
            translation_enabled: default_true(),
            translation_fraction: default_translation_fraction(),
            brightness_range: default_brightness(),
            height_shift_range: default_height_shift(),
            channel_scale_range: default_channel_scale(),
            enabled: default_enabled(),
        }
    }
}

impl AugmentationPolicy {
    /// Policy with every transform disabled; convenient as a no-op control.
    pub fn none() -> Self {
        AugmentationPolicy { enabled: BTreeSet::new(), ..AugmentationPolicy::default() }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        fn ordered(r: (f64, f64)) -> bool {
            r.0.is_finite() && r.1.is_finite() && r.0 <= r.1
        }
        if !ordered(self.zoom_range) || self.zoom_range.0 <= -1.0 || self.zoom_range.1 >= 1.0 {
            return Err(AugmentError::InvalidPolicy("zoom_range must be inside (-1, 1)"));
        }
        if !ordered(self.rotation_range_deg) {
            return Err(AugmentError::InvalidPolicy("rotation_range_deg out of order"));
        }
        if !ordered(self.shear_range_deg)
            || math::fabs(self.shear_range_deg.0) >= 90.0
            || math::fabs(self.shear_range_deg.1) >= 90.0
        {
            return Err(AugmentError::InvalidPolicy("shear_range_deg must be inside (-90, 90)"));
        }
        if !(self.translation_fraction.is_finite()
            && (0.0..1.0).contains(&self.translation_fraction))
        {
            return Err(AugmentError::InvalidPolicy("translation_fraction must be in [0, 1)"));
        }
        if !ordered(self.brightness_range) || self.brightness_range.0 <= 0.0 {
            return Err(AugmentError::InvalidPolicy("brightness_range factors must be positive"));
        }
        if !ordered(self.height_shift_range)
            || self.height_shift_range.0 <= -1.0
            || self.height_shift_range.1 >= 1.0
        {
            return Err(AugmentError::InvalidPolicy("height_shift_range must be inside (-1, 1)"));
        }
        if !ordered(self.channel_scale_range) || self.channel_scale_range.0 <= 0.0 {
            return Err(AugmentError::InvalidPolicy(
                "channel_scale_range factors must be positive",
            ));
        }
        Ok(())
    }

    fn draws(&self, kind: TransformKind) -> bool {
        self.enabled.contains(&kind)
            && (kind != TransformKind::Translation || self.translation_enabled)
    }
}

/// One sampled augmentation: the drawn parameters of every applied transform.
///
/// Geometric values are stored as drawn (fractions, degrees) and materialize
/// into a single affine matrix per image size via [`Self::composed_affine`],
/// since centers and pixel offsets depend on the dimensions of the frame
/// being augmented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcreteAugmentation {
    pub zoom: f64,
    pub rotation_deg: f64,
    pub shear_deg: f64,
    /// Fractions of width and height.
    pub translation: (f64, f64),
    /// Signed fraction of height.
    pub height_shift: f64,
    pub brightness: f64,
    pub channel_scale: [f64; 3],
    pub applied_kinds: Vec<TransformKind>,
}

impl ConcreteAugmentation {
    pub fn identity() -> Self {
        ConcreteAugmentation {
            zoom: 0.0,
            rotation_deg: 0.0,
            shear_deg: 0.0,
            translation: (0.0, 0.0),
            height_shift: 0.0,
            brightness: 1.0,
            channel_scale: [1.0, 1.0, 1.0],
            applied_kinds: Vec::new(),
        }
    }

    /// Single warp equivalent to zoom, then rotation, then shear, then
    /// translation, then height shift, all about the image center
    /// `((w-1)/2, (h-1)/2)`.
    pub fn composed_affine(&self, width: u32, height: u32) -> AffineParams {
        let center = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let mut acc = make_zoom(self.zoom, center).unwrap_or(AffineParams::IDENTITY);
        acc = compose_affine(&make_rotation(self.rotation_deg, center), &acc);
        let shear = make_shear(self.shear_deg, center).unwrap_or(AffineParams::IDENTITY);
        acc = compose_affine(&shear, &acc);
        let t = make_translation(
            self.translation.0 * width as f64,
            self.translation.1 * height as f64,
        );
        acc = compose_affine(&t, &acc);
        let hs = make_translation(0.0, self.height_shift * height as f64);
        compose_affine(&hs, &acc)
    }

    pub fn is_geometric_identity(&self) -> bool {
        self.zoom == 0.0
            && self.rotation_deg == 0.0
            && self.shear_deg == 0.0
            && self.translation == (0.0, 0.0)
            && self.height_shift == 0.0
    }

    pub fn is_intensity_identity(&self) -> bool {
        self.brightness == 1.0 && self.channel_scale == [1.0, 1.0, 1.0]
    }
}

/// Draw one concrete augmentation from the policy.
///
/// Draw order is fixed: zoom, rotation, shear, translation (dx then dy),
/// height shift (magnitude then direction), brightness, channel scales
/// (r, g, b). Disabled transforms draw nothing and contribute identity, so
/// the consumed random sequence is a function of the enabled set alone.
pub fn sample_policy(policy: &AugmentationPolicy, rng: &mut RngState) -> ConcreteAugmentation {
    let mut out = ConcreteAugmentation::identity();
    let mut mark = |kind| out.applied_kinds.push(kind);

    if policy.draws(TransformKind::Zoom) {
        out.zoom = rng.uniform(policy.zoom_range.0, policy.zoom_range.1);
        mark(TransformKind::Zoom);
    }
    if policy.draws(TransformKind::Rotation) {
        out.rotation_deg = rng.uniform(policy.rotation_range_deg.0, policy.rotation_range_deg.1);
        mark(TransformKind::Rotation);
    }
    if policy.draws(TransformKind::Shear) {
        out.shear_deg = rng.uniform(policy.shear_range_deg.0, policy.shear_range_deg.1);
        mark(TransformKind::Shear);
    }
    if policy.draws(TransformKind::Translation) {
        let t = policy.translation_fraction;
        out.translation = (rng.uniform(-t, t), rng.uniform(-t, t));
        mark(TransformKind::Translation);
    }
    if policy.draws(TransformKind::HeightShift) {
        let magnitude = rng.uniform(policy.height_shift_range.0, policy.height_shift_range.1);
        let sign = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
        out.height_shift = sign * magnitude;
        mark(TransformKind::HeightShift);
    }
    if policy.draws(TransformKind::Brightness) {
        out.brightness = rng.uniform(policy.brightness_range.0, policy.brightness_range.1);
        mark(TransformKind::Brightness);
    }
    if policy.draws(TransformKind::ChannelScale) {
        for c in &mut out.channel_scale {
            *c = rng.uniform(policy.channel_scale_range.0, policy.channel_scale_range.1);
        }
        mark(TransformKind::ChannelScale);
    }
    out
}

/// Apply a sampled augmentation: one affine warp (black fill), then the
/// intensity step. Brightness and channel factors are multiplied together
/// and quantized once, so their order can never matter.
pub fn apply(img: &Image, aug: &ConcreteAugmentation) -> Image {
    let warped = if aug.is_geometric_identity() {
        img.clone()
    } else {
        let affine = aug.composed_affine(img.width(), img.height());
        warp_affine(img, &affine, FillMode::default())
    };
    if aug.is_intensity_identity() {
        return warped;
    }
    let factors = [
        aug.brightness * aug.channel_scale[0],
        aug.brightness * aug.channel_scale[1],
        aug.brightness * aug.channel_scale[2],
    ];
    let data = warped
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| math::quantize_u8(*v as f64 * factors[i % 3]))
        .collect();
    Image::new(warped.width(), warped.height(), data).expect("same dimensions")
}

/// Alpha-blend `fore` over `back` through `mask`: `out = a*fore + (1-a)*back`
/// with `a = mask/255`, rounded half away from zero.
pub fn composite(fore: &Image, mask: &Mask, back: &Image) -> Result<Image, AugmentError> {
    let dims = (fore.width(), fore.height());
    if dims != (mask.width(), mask.height()) || dims != (back.width(), back.height()) {
        return Err(AugmentError::DimensionMismatch);
    }
    let mut data = Vec::with_capacity(fore.data().len());
    for (i, (f, b)) in fore.data().iter().zip(back.data()).enumerate() {
        let a = mask.data()[i / 3] as f64 / 255.0;
        data.push(math::quantize_u8(a * *f as f64 + (1.0 - a) * *b as f64));
    }
    Ok(Image::new(dims.0, dims.1, data).expect("same dimensions"))
}

/// Uniform pick from a nonempty background pool.
pub fn choose_background<'a>(
    pool: &'a [Image],
    rng: &mut RngState,
) -> Result<&'a Image, AugmentError> {
    if pool.is_empty() {
        return Err(AugmentError::EmptyPool);
    }
    Ok(&pool[rng.index(pool.len())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: &AffineParams, b: &AffineParams, tol: f64) -> bool {
        a.m.iter().zip(b.m.iter()).all(|(x, y)| math::fabs(x - y) <= tol)
    }

    #[test]
    fn rotation_matches_hand_formulas() {
        let c = (3.0, 5.0);
        assert!(close(&make_rotation(0.0, c), &AffineParams::IDENTITY, 0.0));

        // 90 degrees: output (x, y) reads source (cx + (y-cy), cy - (x-cx)).
        let r90 = make_rotation(90.0, c);
        let (xs, ys) = r90.map(4.0, 9.0);
        assert!((xs - (3.0 + 4.0)).abs() < 1e-12);
        assert!((ys - (5.0 - 1.0)).abs() < 1e-12);

        // 180 about the center of a 2x2 image: (0,0) reads (1,1).
        let r180 = make_rotation(180.0, (0.5, 0.5));
        let (xs, ys) = r180.map(0.0, 0.0);
        assert!((xs - 1.0).abs() < 1e-12 && (ys - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shear_formulas_and_degenerate_angle() {
        let s45 = make_shear(45.0, (0.0, 0.0)).unwrap();
        let (xs, ys) = s45.map(2.0, 3.0);
        assert!((xs - 5.0).abs() < 1e-12);
        assert_eq!(ys, 3.0);

        let s = make_shear(10.0, (0.0, 4.0)).unwrap();
        let back = make_shear(-10.0, (0.0, 4.0)).unwrap();
        assert!(close(&compose_affine(&back, &s), &AffineParams::IDENTITY, 1e-12));

        assert!(matches!(make_shear(90.0, (0.0, 0.0)), Err(AugmentError::DegeneratePhi(_))));
        assert!(matches!(make_shear(f64::NAN, (0.0, 0.0)), Err(AugmentError::DegeneratePhi(_))));
    }

    #[test]
    fn zoom_fixed_point_and_degenerate_scale() {
        let c = (7.5, 7.5);
        let z = make_zoom(1.0, c).unwrap();
        let (xs, ys) = z.map(7.5, 7.5);
        assert_eq!((xs, ys), (7.5, 7.5));
        let (xs, _) = z.map(9.5, 7.5);
        assert!((xs - 8.5).abs() < 1e-12, "2x zoom halves offsets from center");

        assert!(close(&make_zoom(0.0, c).unwrap(), &AffineParams::IDENTITY, 0.0));
        assert!(matches!(make_zoom(-1.0, c), Err(AugmentError::DegenerateScale(_))));
    }

    #[test]
    fn compose_group_laws() {
        let c = (10.0, 20.0);
        let r = make_rotation(33.0, c);
        assert!(close(&compose_affine(&AffineParams::IDENTITY, &r), &r, 0.0));
        assert!(close(&compose_affine(&r, &AffineParams::IDENTITY), &r, 0.0));

        let twice = compose_affine(&make_rotation(90.0, c), &make_rotation(90.0, c));
        assert!(close(&twice, &make_rotation(180.0, c), 1e-12));

        let t = compose_affine(&make_translation(3.0, 0.0), &make_translation(-3.0, 0.0));
        assert!(close(&t, &AffineParams::IDENTITY, 0.0));

        // Associativity.
        let s = make_shear(5.0, c).unwrap();
        let z = make_zoom(0.1, c).unwrap();
        let ab_c = compose_affine(&compose_affine(&r, &s), &z);
        let a_bc = compose_affine(&r, &compose_affine(&s, &z));
        assert!(close(&ab_c, &a_bc, 1e-12));

        // Inverse.
        let inv = invert_affine(&ab_c).unwrap();
        assert!(close(&compose_affine(&inv, &ab_c), &AffineParams::IDENTITY, 1e-10));
        assert!(close(&compose_affine(&ab_c, &inv), &AffineParams::IDENTITY, 1e-10));
    }

    #[test]
    fn warp_identity_is_byte_identical() {
        let mut img = Image::filled(5, 4, [10, 20, 30]).unwrap();
        img.set_pixel(2, 1, [200, 100, 50]);
        let out = warp_affine(&img, &AffineParams::IDENTITY, FillMode::default());
        assert_eq!(out, img);
    }

    #[test]
    fn warp_integer_translation_shifts_columns() {
        // Width-2 image (A, B), shift content right by 1: output is (fill, A).
        let img = Image::new(2, 1, vec![100, 0, 0, 0, 200, 0]).unwrap();
        let out = warp_affine(&img, &make_translation(1.0, 0.0), FillMode::default());
        assert_eq!(out.pixel(0, 0), [0, 0, 0]);
        assert_eq!(out.pixel(1, 0), [100, 0, 0]);
    }

    #[test]
    fn rotate_there_and_back_is_close_on_smooth_image() {
        // Linear gradient, so bilinear resampling error stays small.
        let mut data = Vec::new();
        for y in 0..32u32 {
            for x in 0..32u32 {
                let v = (4 * x + 3 * y) as u8;
                data.extend_from_slice(&[v, v, v]);
            }
        }
        let img = Image::new(32, 32, data).unwrap();
        let c = (15.5, 15.5);
        let fwd = warp_affine(&img, &make_rotation(30.0, c), FillMode::ClampToEdge);
        let back = warp_affine(&fwd, &make_rotation(-30.0, c), FillMode::ClampToEdge);
        // Content within the inscribed circle never leaves the canvas under a
        // pure rotation, so it survives the round trip; corner content is cut
        // off no matter the margin.
        let mut checked = 0;
        for y in 3..29u32 {
            for x in 3..29u32 {
                let r2 = (x as f64 - c.0) * (x as f64 - c.0) + (y as f64 - c.1) * (y as f64 - c.1);
                if r2 > 14.0 * 14.0 {
                    continue;
                }
                let a = img.pixel(x, y)[0] as i32;
                let b = back.pixel(x, y)[0] as i32;
                assert!((a - b).abs() <= 6, "({x},{y}): {a} vs {b}");
                checked += 1;
            }
        }
        assert!(checked > 400, "enough interior pixels exercised: {checked}");
    }

    #[test]
    fn brightness_examples() {
        let img = Image::new(1, 1, vec![200, 250, 2]).unwrap();
        assert_eq!(adjust_brightness(&img, 1.0).unwrap(), img);
        assert_eq!(adjust_brightness(&img, 0.5).unwrap().pixel(0, 0), [100, 125, 1]);
        assert_eq!(adjust_brightness(&img, 1.2).unwrap().pixel(0, 0), [240, 255, 2]);
        assert!(matches!(adjust_brightness(&img, 0.0), Err(AugmentError::NonpositiveFactor(_))));
    }

    #[test]
    fn channel_scaling_examples() {
        let img = Image::filled(2, 2, [100, 100, 100]).unwrap();
        let out = scale_channels(&img, [0.8, 1.0, 1.0]).unwrap();
        assert_eq!(out.pixel(1, 1), [80, 100, 100]);
        assert_eq!(
            scale_channels(&img, [1.2, 1.2, 1.2]).unwrap(),
            adjust_brightness(&img, 1.2).unwrap()
        );
        assert!(matches!(
            scale_channels(&img, [1.0, -0.1, 1.0]),
            Err(AugmentError::NonpositiveFactor(_))
        ));
    }

    #[test]
    fn default_policy_validates_and_point_ranges_are_deterministic() {
        let policy = AugmentationPolicy::default();
        policy.validate().unwrap();

        let mut pinned = AugmentationPolicy::default();
        pinned.rotation_range_deg = (7.0, 7.0);
        pinned.validate().unwrap();
        let mut rng = RngState::new(99);
        let aug = sample_policy(&pinned, &mut rng);
        assert_eq!(aug.rotation_deg, 7.0);
    }

    #[test]
    fn policy_validation_rejects_bad_fields() {
        let mut p = AugmentationPolicy::default();
        p.zoom_range = (0.3, 0.1);
        assert!(p.validate().is_err());
        let mut p = AugmentationPolicy::default();
        p.brightness_range = (0.0, 1.0);
        assert!(p.validate().is_err());
        let mut p = AugmentationPolicy::default();
        p.shear_range_deg = (0.0, 95.0);
        assert!(p.validate().is_err());
        let mut p = AugmentationPolicy::default();
        p.translation_fraction = 1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let policy = AugmentationPolicy::default();
        let a = sample_policy(&policy, &mut RngState::new(5));
        let b = sample_policy(&policy, &mut RngState::new(5));
        assert_eq!(a, b);
        assert_eq!(a.applied_kinds.len(), 7);

        let mut rng = RngState::new(123);
        let mut rot_sum = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let aug = sample_policy(&policy, &mut rng);
            assert!(aug.zoom >= -0.2 && aug.zoom < 0.2);
            assert!(aug.rotation_deg >= -30.0 && aug.rotation_deg < 30.0);
            assert!(aug.shear_deg >= 0.0 && aug.shear_deg < 10.0);
            assert!(aug.translation.0.abs() <= 0.1 && aug.translation.1.abs() <= 0.1);
            assert!(aug.height_shift.abs() <= 0.15);
            assert!(aug.brightness >= 0.5 && aug.brightness < 1.2);
            for c in aug.channel_scale {
                assert!(c >= 0.8 && c < 1.2);
            }
            rot_sum += aug.rotation_deg;
        }
        assert!((rot_sum / n as f64).abs() < 1.0, "rotation mean near range midpoint");
    }

    #[test]
    fn disabled_transforms_contribute_identity_and_skip_draws() {
        let mut policy = AugmentationPolicy::default();
        policy.enabled = [TransformKind::Brightness].into_iter().collect();
        let mut rng = RngState::new(17);
        let aug = sample_policy(&policy, &mut rng);
        assert!(aug.is_geometric_identity());
        assert_eq!(aug.applied_kinds, vec![TransformKind::Brightness]);

        // Exactly one draw consumed.
        let mut reference = RngState::new(17);
        reference.next_f64();
        assert_eq!(rng.next_u64(), reference.next_u64());
    }

    #[test]
    fn translation_flag_gates_the_kind() {
        let mut policy = AugmentationPolicy::default();
        policy.translation_enabled = false;
        let aug = sample_policy(&policy, &mut RngState::new(3));
        assert_eq!(aug.translation, (0.0, 0.0));
        assert!(!aug.applied_kinds.contains(&TransformKind::Translation));
    }

    #[test]
    fn apply_identity_is_byte_identical() {
        let mut img = Image::filled(6, 5, [9, 9, 9]).unwrap();
        img.set_pixel(3, 2, [1, 2, 3]);
        assert_eq!(apply(&img, &ConcreteAugmentation::identity()), img);
    }

    #[test]
    fn apply_is_reproducible_and_fuses_intensity() {
        let mut img = Image::filled(16, 16, [40, 90, 140]).unwrap();
        img.set_pixel(8, 8, [250, 10, 60]);
        let policy = AugmentationPolicy::default();
        let aug = sample_policy(&policy, &mut RngState::new(2024));
        let a = apply(&img, &aug);
        let b = apply(&img, &aug);
        assert_eq!(a, b);

        // The fused intensity step sits within one level of running the two
        // standalone ops, which quantize twice.
        let mut intensity_only = aug.clone();
        intensity_only.zoom = 0.0;
        intensity_only.rotation_deg = 0.0;
        intensity_only.shear_deg = 0.0;
        intensity_only.translation = (0.0, 0.0);
        intensity_only.height_shift = 0.0;
        let fused = apply(&img, &intensity_only);
        let seq = scale_channels(
            &adjust_brightness(&img, intensity_only.brightness).unwrap(),
            intensity_only.channel_scale,
        )
        .unwrap();
        for (x, y) in fused.data().iter().zip(seq.data()) {
            assert!((*x as i32 - *y as i32).abs() <= 1);
        }
    }

    #[test]
    fn composite_blends_and_checks_dims() {
        let fore = Image::filled(3, 2, [100, 100, 100]).unwrap();
        let back = Image::filled(3, 2, [0, 0, 0]).unwrap();

        let all_fore = composite(&fore, &Mask::filled(3, 2, 255).unwrap(), &back).unwrap();
        assert_eq!(all_fore, fore);
        let all_back = composite(&fore, &Mask::filled(3, 2, 0).unwrap(), &back).unwrap();
        assert_eq!(all_back, back);

        // alpha = 128/255: 100 * 0.50196 = 50.196 -> 50.
        let half = composite(&fore, &Mask::filled(3, 2, 128).unwrap(), &back).unwrap();
        assert_eq!(half.pixel(0, 0), [50, 50, 50]);

        let small = Image::filled(2, 2, [0, 0, 0]).unwrap();
        assert_eq!(
            composite(&fore, &Mask::filled(3, 2, 255).unwrap(), &small),
            Err(AugmentError::DimensionMismatch)
        );
    }

    #[test]
    fn composite_of_image_over_itself_is_identity() {
        let mut img = Image::filled(4, 4, [30, 60, 90]).unwrap();
        img.set_pixel(1, 3, [255, 0, 128]);
        let mut mask_data = vec![0u8; 16];
        for (i, v) in mask_data.iter_mut().enumerate() {
            *v = (i * 16) as u8;
        }
        let mask = Mask::new(4, 4, mask_data).unwrap();
        assert_eq!(composite(&img, &mask, &img).unwrap(), img);
    }

    #[test]
    fn background_choice_is_uniform_ish() {
        let pool: Vec<Image> =
            (0..5u8).map(|i| Image::filled(1, 1, [i, 0, 0]).unwrap()).collect();
        let mut rng = RngState::new(77);
        assert!(matches!(choose_background(&[], &mut rng), Err(AugmentError::EmptyPool)));

        let mut counts = [0u32; 5];
        for _ in 0..10_000 {
            let img = choose_background(&pool, &mut rng).unwrap();
            counts[img.pixel(0, 0)[0] as usize] += 1;
        }
        for c in counts {
            assert!((1800..=2200).contains(&c), "counts {counts:?}");
        }
    }
}
