//! Perturbation-based explanations: tile the image into a grid of patches,
//! knock random subsets out against a baseline, watch the predictor, and fit
//! a locally weighted linear surrogate whose coefficients rank the patches.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::image::{Image, PixelBox};
use crate::math;
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq)]
pub enum ExplainError {
    /// More grid rows/cols than the image has pixel rows/cols.
    GridTooFine { rows: u32, cols: u32, width: u32, height: u32 },
    /// Grid was built for an image of a different size.
    GridMismatch { grid: (u32, u32), image: (u32, u32) },
    MaskLengthMismatch { expected: usize, got: usize },
    /// Fewer perturbation samples than surrogate coefficients.
    TooFewSamples { needed: usize, got: usize },
    /// Normal equations are rank-deficient and there is no ridge term.
    SingularSystem,
    ClassOutOfRange { class_id: usize, classes: usize },
    BadInput(&'static str),
    /// The predictor itself failed on a perturbed sample.
    Predictor(String),
}

impl core::fmt::Display for ExplainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ExplainError::GridTooFine { rows, cols, width, height } => write!(
                f,
                "{rows}x{cols} grid is finer than the {width}x{height} image"
            ),
            ExplainError::GridMismatch { grid, image } => write!(
                f,
                "grid tiles a {}x{} image, got {}x{}",
                grid.0, grid.1, image.0, image.1
            ),
            ExplainError::MaskLengthMismatch { expected, got } => {
                write!(f, "mask has {got} entries, grid has {expected} patches")
            }
            ExplainError::TooFewSamples { needed, got } => {
                write!(f, "{got} samples cannot fit {needed} coefficients")
            }
            ExplainError::SingularSystem => write!(f, "singular system and lambda is zero"),
            ExplainError::ClassOutOfRange { class_id, classes } => {
                write!(f, "class {class_id} out of range for {classes} outputs")
            }
            ExplainError::BadInput(detail) => write!(f, "{detail}"),
            ExplainError::Predictor(detail) => write!(f, "predictor failed: {detail}"),
        }
    }
}

impl core::error::Error for ExplainError {}

/// A disjoint tiling of an image into `rows x cols` rectangular patches.
/// Patch sides are `floor(dim / count)`; the last row/column absorbs any
/// remainder, so the tiling is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    rows: u32,
    cols: u32,
    width: u32,
    height: u32,
}

pub fn grid_segments(img: &Image, rows: u32, cols: u32) -> Result<PatchGrid, ExplainError> {
    if rows == 0 || cols == 0 || rows > img.height() || cols > img.width() {
        return Err(ExplainError::GridTooFine {
            rows,
            cols,
            width: img.width(),
            height: img.height(),
        });
    }
    Ok(PatchGrid { rows, cols, width: img.width(), height: img.height() })
}

impl PatchGrid {
    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn num_patches(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    /// Pixel extent of patch `index`, counted row-major over the grid.
    pub fn patch_box(&self, index: usize) -> PixelBox {
        debug_assert!(index < self.num_patches());
        let r = index as u32 / self.cols;
        let c = index as u32 % self.cols;
        let bw = self.width / self.cols;
        let bh = self.height / self.rows;
        PixelBox::new(
            c * bw,
            r * bh,
            if c + 1 == self.cols { self.width } else { (c + 1) * bw },
            if r + 1 == self.rows { self.height } else { (r + 1) * bh },
        )
    }

    fn matches(&self, img: &Image) -> Result<(), ExplainError> {
        if img.width() != self.width || img.height() != self.height {
            return Err(ExplainError::GridMismatch {
                grid: (self.width, self.height),
                image: (img.width(), img.height()),
            });
        }
        Ok(())
    }
}

/// What an "off" patch is filled with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Constant mid-gray.
    #[default]
    Gray,
    /// Each off patch is replaced by its own mean color, which removes the
    /// patch's structure while keeping its overall brightness.
    MeanColor,
}

const GRAY: [u8; 3] = [128, 128, 128];

fn patch_mean(img: &Image, bx: PixelBox) -> [u8; 3] {
    let mut sums = [0u64; 3];
    for y in bx.y0..bx.y1 {
        for x in bx.x0..bx.x1 {
            let p = img.pixel(x, y);
            for c in 0..3 {
                sums[c] += p[c] as u64;
            }
        }
    }
    let count = (bx.width() as u64 * bx.height() as u64).max(1);
    [0, 1, 2].map(|c| math::quantize_u8(sums[c] as f64 / count as f64))
}

/// Copy of `img` with every patch whose mask bit is false replaced by the
/// baseline; patches with a true bit are untouched.
pub fn perturb(
    img: &Image,
    grid: &PatchGrid,
    on_mask: &[bool],
    baseline: Baseline,
) -> Result<Image, ExplainError> {
    grid.matches(img)?;
    if on_mask.len() != grid.num_patches() {
        return Err(ExplainError::MaskLengthMismatch {
            expected: grid.num_patches(),
            got: on_mask.len(),
        });
    }
    let mut out = img.clone();
    for (i, on) in on_mask.iter().enumerate() {
        if *on {
            continue;
        }
        let bx = grid.patch_box(i);
        let fill = match baseline {
            Baseline::Gray => GRAY,
            Baseline::MeanColor => patch_mean(img, bx),
        };
        for y in bx.y0..bx.y1 {
            for x in bx.x0..bx.x1 {
                out.set_pixel(x, y, fill);
            }
        }
    }
    Ok(out)
}

/// Solves `(X'WX + lambda I) beta = X'Wy` by Gaussian elimination with
/// partial pivoting. `x` is row-major `n x d`. Any `lambda > 0` makes the
/// system positive definite; with `lambda = 0` a rank-deficient design is
/// reported rather than silently solved.
pub fn solve_ridge_weighted(
    x: &[f64],
    d: usize,
    y: &[f64],
    w: &[f64],
    lambda: f64,
) -> Result<Vec<f64>, ExplainError> {
    let n = y.len();
    if n == 0 || d == 0 {
        return Err(ExplainError::BadInput("empty system"));
    }
    if x.len() != n * d || w.len() != n {
        return Err(ExplainError::BadInput("design, target, and weight sizes disagree"));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(ExplainError::BadInput("lambda must be finite and nonnegative"));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(ExplainError::BadInput("weights must be finite and nonnegative"));
    }

    // Normal equations.
    let mut a = vec![0.0f64; d * d];
    let mut b = vec![0.0f64; d];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let wi = w[i];
        for j in 0..d {
            let wxj = wi * row[j];
            b[j] += wxj * y[i];
            for k in j..d {
                a[j * d + k] += wxj * row[k];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            a[j * d + k] = a[k * d + j];
        }
        a[j * d + j] += lambda;
    }

    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        // X'WX is identically zero; solvable only for a zero right side.
        return if b.iter().all(|v| *v == 0.0) {
            Ok(vec![0.0; d])
        } else {
            Err(ExplainError::SingularSystem)
        };
    }
    let tiny = scale * 1e-12;

    for col in 0..d {
        let pivot = (col..d)
            .max_by(|p, q| {
                a[p * d + col].abs().partial_cmp(&a[q * d + col].abs()).unwrap()
            })
            .unwrap();
        if a[pivot * d + col].abs() <= tiny {
            return Err(ExplainError::SingularSystem);
        }
        if pivot != col {
            for k in 0..d {
                a.swap(col * d + k, pivot * d + k);
            }
            b.swap(col, pivot);
        }
        for r in col + 1..d {
            let factor = a[r * d + col] / a[col * d + col];
            if factor == 0.0 {
                continue;
            }
            for k in col..d {
                a[r * d + k] -= factor * a[col * d + k];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut beta = vec![0.0f64; d];
    for col in (0..d).rev() {
        let mut acc = b[col];
        for k in col + 1..d {
            acc -= a[col * d + k] * beta[k];
        }
        beta[col] = acc / a[col * d + col];
    }
    Ok(beta)
}

/// Anything that can score an image into class probabilities. Implemented
/// for closures, so a model plus its preprocessing can be passed inline.
pub trait Predictor {
    fn predict(&mut self, img: &Image) -> Result<Vec<f64>, ExplainError>;
}

impl<F> Predictor for F
where
    F: FnMut(&Image) -> Result<Vec<f64>, ExplainError>,
{
    fn predict(&mut self, img: &Image) -> Result<Vec<f64>, ExplainError> {
        self(img)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainParams {
    pub n_samples: usize,
    pub kernel_width: f64,
    pub ridge_lambda: f64,
    pub baseline: Baseline,
    pub seed: u64,
}

impl Default for ExplainParams {
    fn default() -> Self {
        ExplainParams {
            n_samples: 512,
            kernel_width: 0.25,
            ridge_lambda: 1e-3,
            baseline: Baseline::Gray,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub class_id: usize,
    /// One signed coefficient per patch, grid row-major.
    pub patch_weights: Vec<f64>,
    /// All patch indices, sorted by descending weight (ties keep grid order).
    pub top_k: Vec<usize>,
    pub n_samples: usize,
    pub kernel_width: f64,
    pub ridge_lambda: f64,
}

/// Fits the surrogate for `class_id`.
///
/// Masks are drawn with every patch independently on with probability 1/2;
/// the first sample is always the unperturbed image. Each sample is weighted
/// by `exp(-D^2 / kernel_width^2)` where `D` is the fraction of patches
/// turned off. Design and target are weighted-mean centered before the
/// ridge solve, so a constant predictor yields exactly zero weights and no
/// intercept column is needed.
pub fn explain<P: Predictor + ?Sized>(
    predictor: &mut P,
    img: &Image,
    grid: &PatchGrid,
    class_id: usize,
    params: &ExplainParams,
) -> Result<Explanation, ExplainError> {
    let d = grid.num_patches();
    if params.n_samples < d {
        return Err(ExplainError::TooFewSamples { needed: d, got: params.n_samples });
    }
    if !params.kernel_width.is_finite() || params.kernel_width <= 0.0 {
        return Err(ExplainError::BadInput("kernel width must be finite and positive"));
    }
    grid.matches(img)?;

    let n = params.n_samples;
    let mut rng = RngState::new(params.seed);
    let mut xs = Vec::with_capacity(n * d);
    let mut ys = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    let mut mask = vec![true; d];
    for s in 0..n {
        if s > 0 {
            for bit in mask.iter_mut() {
                *bit = rng.next_u64() & 1 == 1;
            }
        }
        let sample = perturb(img, grid, &mask, params.baseline)?;
        let probs = predictor.predict(&sample)?;
        if class_id >= probs.len() {
            return Err(ExplainError::ClassOutOfRange { class_id, classes: probs.len() });
        }
        let off = mask.iter().filter(|on| !**on).count();
        let dist = off as f64 / d as f64;
        ws.push(math::exp(-(dist * dist) / (params.kernel_width * params.kernel_width)));
        xs.extend(mask.iter().map(|on| if *on { 1.0 } else { 0.0 }));
        ys.push(probs[class_id]);
    }

    let wsum: f64 = ws.iter().sum();
    let mut xbar = vec![0.0f64; d];
    let mut ybar = 0.0f64;
    for i in 0..n {
        ybar += ws[i] * ys[i];
        for j in 0..d {
            xbar[j] += ws[i] * xs[i * d + j];
        }
    }
    ybar /= wsum;
    for v in xbar.iter_mut() {
        *v /= wsum;
    }
    for i in 0..n {
        ys[i] -= ybar;
        for j in 0..d {
            xs[i * d + j] -= xbar[j];
        }
    }

    let patch_weights = solve_ridge_weighted(&xs, d, &ys, &ws, params.ridge_lambda)?;
    let mut top_k: Vec<usize> = (0..d).collect();
    top_k.sort_by(|p, q| {
        patch_weights[*q].partial_cmp(&patch_weights[*p]).unwrap_or(core::cmp::Ordering::Equal)
    });
    Ok(Explanation {
        class_id,
        patch_weights,
        top_k,
        n_samples: params.n_samples,
        kernel_width: params.kernel_width,
        ridge_lambda: params.ridge_lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(w: u32, h: u32) -> Image {
        let mut data = Vec::new();
        for y in 0..h {
            for x in 0..w {
                data.extend([(x * 7 % 256) as u8, (y * 11 % 256) as u8, ((x + y) % 256) as u8]);
            }
        }
        Image::new(w, h, data).unwrap()
    }

    #[test]
    fn grid_tiles_exactly() {
        let img = gradient_image(5, 5);
        let grid = grid_segments(&img, 2, 2).unwrap();
        let mut covered = vec![0u8; 25];
        let mut widths = Vec::new();
        let mut heights = Vec::new();
        for i in 0..grid.num_patches() {
            let b = grid.patch_box(i);
            widths.push(b.width());
            heights.push(b.height());
            for y in b.y0..b.y1 {
                for x in b.x0..b.x1 {
                    covered[(y * 5 + x) as usize] += 1;
                }
            }
        }
        assert!(covered.iter().all(|c| *c == 1), "tiling not exact: {covered:?}");
        widths.sort();
        assert_eq!(widths, [2, 2, 3, 3]);
        heights.sort();
        assert_eq!(heights, [2, 2, 3, 3]);
    }

    #[test]
    fn one_by_one_grid_is_the_whole_image() {
        let img = gradient_image(4, 6);
        let grid = grid_segments(&img, 1, 1).unwrap();
        assert_eq!(grid.patch_box(0), PixelBox::new(0, 0, 4, 6));
    }

    #[test]
    fn too_fine_grids_are_rejected() {
        let img = gradient_image(3, 3);
        assert!(matches!(
            grid_segments(&img, 4, 2),
            Err(ExplainError::GridTooFine { .. })
        ));
        assert!(matches!(
            grid_segments(&img, 0, 2),
            Err(ExplainError::GridTooFine { .. })
        ));
    }

    #[test]
    fn perturb_all_on_is_identity() {
        let img = gradient_image(8, 8);
        let grid = grid_segments(&img, 2, 2).unwrap();
        let out = perturb(&img, &grid, &[true; 4], Baseline::Gray).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn perturb_all_off_gray_is_constant() {
        let img = gradient_image(8, 8);
        let grid = grid_segments(&img, 2, 2).unwrap();
        let out = perturb(&img, &grid, &[false; 4], Baseline::Gray).unwrap();
        assert!(out.data().iter().all(|b| *b == 128));
    }

    #[test]
    fn perturb_touches_only_off_patches() {
        let img = gradient_image(8, 8);
        let grid = grid_segments(&img, 2, 2).unwrap();
        let out = perturb(&img, &grid, &[true, false, true, true], Baseline::Gray).unwrap();
        let off = grid.patch_box(1);
        for y in 0..8 {
            for x in 0..8 {
                let inside = x >= off.x0 && x < off.x1 && y >= off.y0 && y < off.y1;
                if inside {
                    assert_eq!(out.pixel(x, y), [128, 128, 128]);
                } else {
                    assert_eq!(out.pixel(x, y), img.pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn mean_color_baseline_uses_patch_mean() {
        let mut img = Image::filled(4, 2, [10, 20, 30]).unwrap();
        // Left patch gets two pixels of a different color.
        img.set_pixel(0, 0, [50, 20, 30]);
        img.set_pixel(1, 0, [50, 20, 30]);
        let grid = grid_segments(&img, 1, 2).unwrap();
        let out = perturb(&img, &grid, &[false, true], Baseline::MeanColor).unwrap();
        // Mean of {50, 50, 10, 10} = 30 on the red channel.
        assert_eq!(out.pixel(0, 0), [30, 20, 30]);
        assert_eq!(out.pixel(1, 1), [30, 20, 30]);
        assert_eq!(out.pixel(2, 0), [10, 20, 30]);
    }

    #[test]
    fn mask_length_is_checked() {
        let img = gradient_image(8, 8);
        let grid = grid_segments(&img, 2, 2).unwrap();
        assert_eq!(
            perturb(&img, &grid, &[true; 3], Baseline::Gray),
            Err(ExplainError::MaskLengthMismatch { expected: 4, got: 3 })
        );
    }

    #[test]
    fn ridge_identity_design_returns_targets() {
        let x = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let y = [4.0, -2.0, 0.5];
        let beta = solve_ridge_weighted(&x, 3, &y, &[1.0; 3], 0.0).unwrap();
        for (b, t) in beta.iter().zip(&y) {
            assert!((b - t).abs() < 1e-12);
        }
    }

    #[test]
    fn ridge_single_column_fits_mean() {
        let beta = solve_ridge_weighted(&[1.0, 1.0], 1, &[2.0, 4.0], &[1.0, 1.0], 0.0).unwrap();
        assert!((beta[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_without_ridge_is_an_error() {
        // Two identical columns.
        let x = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        let y = [1.0, 2.0, 3.0];
        assert_eq!(
            solve_ridge_weighted(&x, 2, &y, &[1.0; 3], 0.0),
            Err(ExplainError::SingularSystem)
        );
        // Any positive lambda makes it solvable.
        assert!(solve_ridge_weighted(&x, 2, &y, &[1.0; 3], 1e-6).is_ok());
    }

    #[test]
    fn ridge_rejects_bad_input() {
        assert!(solve_ridge_weighted(&[], 0, &[], &[], 0.0).is_err());
        assert!(solve_ridge_weighted(&[1.0], 1, &[1.0], &[-1.0], 0.0).is_err());
        assert!(solve_ridge_weighted(&[1.0], 1, &[1.0], &[1.0], -0.5).is_err());
        assert!(solve_ridge_weighted(&[1.0, 2.0], 1, &[1.0], &[1.0], 0.0).is_err());
    }

    fn bit_reader(grid: PatchGrid) -> impl Fn(&Image) -> Vec<bool> {
        // Probing one pixel per patch recovers the mask when the source
        // image is white and the baseline is gray.
        move |img: &Image| {
            (0..grid.num_patches())
                .map(|i| {
                    let b = grid.patch_box(i);
                    img.pixel(b.x0, b.y0) == [255, 255, 255]
                })
                .collect()
        }
    }

    #[test]
    fn constant_predictor_gets_exactly_zero_weights() {
        let img = Image::filled(16, 16, [255, 255, 255]).unwrap();
        let grid = grid_segments(&img, 4, 4).unwrap();
        let mut predictor =
            |_: &Image| Ok(vec![0.3, 0.7]);
        let params = ExplainParams { n_samples: 64, ..ExplainParams::default() };
        let exp = explain(&mut predictor, &img, &grid, 1, &params).unwrap();
        // Centering leaves at most rounding residue in the right side.
        for w in &exp.patch_weights {
            assert!(w.abs() < 1e-12, "weight {w} not ~0");
        }
    }

    #[test]
    fn huge_lambda_shrinks_everything() {
        let img = Image::filled(16, 16, [255, 255, 255]).unwrap();
        let grid = grid_segments(&img, 4, 4).unwrap();
        let read = bit_reader(grid);
        let mut predictor = move |img: &Image| {
            let bits = read(img);
            let on = bits.iter().filter(|b| **b).count() as f64;
            Ok(vec![on / bits.len() as f64])
        };
        let params =
            ExplainParams { n_samples: 64, ridge_lambda: 1e9, ..ExplainParams::default() };
        let exp = explain(&mut predictor, &img, &grid, 0, &params).unwrap();
        for w in &exp.patch_weights {
            assert!(w.abs() < 1e-6);
        }
    }

    #[test]
    fn linear_predictor_coefficients_are_recovered() {
        let img = Image::filled(16, 16, [255, 255, 255]).unwrap();
        let grid = grid_segments(&img, 4, 4).unwrap();
        let d = grid.num_patches();
        let mut coef_rng = RngState::new(404);
        let coefs: Vec<f64> = (0..d).map(|_| coef_rng.uniform(-1.0, 1.0)).collect();
        let read = bit_reader(grid);
        let cs = coefs.clone();
        let mut predictor = move |img: &Image| {
            let bits = read(img);
            let p: f64 =
                bits.iter().zip(&cs).map(|(b, c)| if *b { *c } else { 0.0 }).sum::<f64>();
            Ok(vec![0.5 + p / 10.0])
        };
        let params = ExplainParams {
            n_samples: 10 * d,
            ridge_lambda: 1e-6,
            ..ExplainParams::default()
        };
        let exp = explain(&mut predictor, &img, &grid, 0, &params).unwrap();
        for (got, want) in exp.patch_weights.iter().zip(&coefs) {
            assert!(
                (got - want / 10.0).abs() < 1e-4,
                "coefficient off: {got} vs {}",
                want / 10.0
            );
        }
    }

    #[test]
    fn explanations_are_deterministic_in_seed() {
        // White source so the bit reader can distinguish on from off.
        let img = Image::filled(16, 16, [255, 255, 255]).unwrap();
        let grid = grid_segments(&img, 4, 4).unwrap();
        let run = |seed: u64| {
            let read = bit_reader(grid);
            let mut predictor = move |img: &Image| {
                let bits = read(img);
                Ok(vec![if bits[5] { 0.9 } else { 0.1 }])
            };
            let params = ExplainParams { n_samples: 64, seed, ..ExplainParams::default() };
            explain(&mut predictor, &img, &grid, 0, &params).unwrap()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7).patch_weights, run(8).patch_weights);
        // The single informative patch dominates the ranking.
        assert_eq!(run(7).top_k[0], 5);
    }

    #[test]
    fn sample_budget_must_cover_coefficients() {
        let img = gradient_image(16, 16);
        let grid = grid_segments(&img, 4, 4).unwrap();
        let mut predictor = |_: &Image| Ok(vec![1.0]);
        let params = ExplainParams { n_samples: 15, ..ExplainParams::default() };
        assert_eq!(
            explain(&mut predictor, &img, &grid, 0, &params),
            Err(ExplainError::TooFewSamples { needed: 16, got: 15 })
        );
    }
}
