//! Layer primitives with exact backward passes. Forward reductions
//! accumulate in `f64`; backward passes produce gradients of the same shape
//! as their arguments so the optimizer can zip parameters with gradients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{NnError, Scalar, Tensor};
use crate::math;

/// Valid-padding cross-correlation layer, square kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `(c_out, c_in, k, k)`
    pub weight: Tensor<T>,
    /// `(c_out)`
    pub bias: Tensor<T>,
    pub stride: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let k = self.weight.shape()[2];
        if h < k || w < k || self.stride == 0 {
            return None;
        }
        Some(((h - k) / self.stride + 1, (w - k) / self.stride + 1))
    }
}

/// `x: (n, c_in, h, w)` -> `(n, c_out, oh, ow)`.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, layer: &Conv2d<T>) -> Result<Tensor<T>, NnError> {
    let (xs, ws) = (x.shape(), layer.weight.shape());
    if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
        return Err(NnError::ShapeMismatch(format!(
            "conv2d expects NCHW input matching kernel channels, got {xs:?} vs {ws:?}"
        )));
    }
    let (n, c_in, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (c_out, k) = (ws[0], ws[2]);
    let (oh, ow) = layer
        .output_hw(h, w)
        .ok_or_else(|| NnError::ShapeMismatch(format!("input {h}x{w} smaller than kernel {k}")))?;

    let mut out = Tensor::zeros(&[n, c_out, oh, ow]);
    for in_ in 0..n {
        for co in 0..c_out {
            let b = layer.bias.data()[co].to_f64();
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b;
                    for ci in 0..c_in {
                        for ky in 0..k {
                            let iy = oy * layer.stride + ky;
                            let xrow = x.idx4(in_, ci, iy, ox * layer.stride);
                            let wrow = layer.weight.idx4(co, ci, ky, 0);
                            for kx in 0..k {
                                acc += x.data()[xrow + kx].to_f64()
                                    * layer.weight.data()[wrow + kx].to_f64();
                            }
                        }
                    }
                    let o = out.idx4(in_, co, oy, ox);
                    out.data_mut()[o] = T::from_f64(acc);
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of conv2d w.r.t. input, weight, and bias given upstream `dy`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    layer: &Conv2d<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let xs = x.shape();
    let ws = layer.weight.shape();
    let (n, c_in, _h, _w) = (xs[0], xs[1], xs[2], xs[3]);
    let (c_out, k) = (ws[0], ws[2]);
    let (oh, ow) = (dy.shape()[2], dy.shape()[3]);
    debug_assert_eq!(dy.shape()[0], n);
    debug_assert_eq!(dy.shape()[1], c_out);

    let mut dx = vec![0.0f64; x.len()];
    let mut dw = vec![0.0f64; layer.weight.len()];
    let mut db = vec![0.0f64; c_out];

    for in_ in 0..n {
        for co in 0..c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = dy.data()[dy.idx4(in_, co, oy, ox)].to_f64();
                    db[co] += g;
                    for ci in 0..c_in {
                        for ky in 0..k {
                            let iy = oy * layer.stride + ky;
                            let xrow = x.idx4(in_, ci, iy, ox * layer.stride);
                            let wrow = layer.weight.idx4(co, ci, ky, 0);
                            for kx in 0..k {
                                dw[wrow + kx] += g * x.data()[xrow + kx].to_f64();
                                dx[xrow + kx] += g * layer.weight.data()[wrow + kx].to_f64();
                            }
                        }
                    }
                }
            }
        }
    }

    let cast = |v: Vec<f64>, shape: &[usize]| {
        Tensor::from_vec(shape, v.into_iter().map(T::from_f64).collect())
    };
    (cast(dx, xs), cast(dw, ws), cast(db, &[c_out]))
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|v| if *v > T::ZERO { *v } else { T::ZERO }).collect();
    Tensor::from_vec(x.shape(), data)
}

/// `x` is the pre-activation input to the forward pass.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(x.shape(), dy.shape());
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(v, g)| if *v > T::ZERO { *g } else { T::ZERO })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// 2x2 max pooling with stride 2; odd tail rows/columns are dropped. Returns
/// the pooled tensor and, per output element, the flat input index of its
/// maximum (first in scan order on ties), which the backward pass routes the
/// gradient through.
pub fn maxpool2_forward<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let s = x.shape();
    debug_assert_eq!(s.len(), 4);
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; out.len()];
    let mut oi = 0;
    for in_ in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = x.idx4(in_, ci, oy * 2, ox * 2);
                    let mut best = x.data()[best_idx];
                    for (ky, kx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = x.idx4(in_, ci, oy * 2 + ky, ox * 2 + kx);
                        if x.data()[idx] > best {
                            best = x.data()[idx];
                            best_idx = idx;
                        }
                    }
                    out.data_mut()[oi] = best;
                    argmax[oi] = best_idx;
                    oi += 1;
                }
            }
        }
    }
    (out, argmax)
}

pub fn maxpool2_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    dy: &Tensor<T>,
) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape);
    for (oi, g) in dy.data().iter().enumerate() {
        dx.data_mut()[argmax[oi]] += *g;
    }
    dx
}

/// Global average pool `(n, c, h, w)` -> `(n, c)`.
pub fn gap_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let area = (h * w) as f64;
    let mut out = Tensor::zeros(&[n, c]);
    for in_ in 0..n {
        for ci in 0..c {
            let base = x.idx4(in_, ci, 0, 0);
            let mut acc = 0.0f64;
            for i in 0..h * w {
                acc += x.data()[base + i].to_f64();
            }
            let o = out.idx2(in_, ci);
            out.data_mut()[o] = T::from_f64(acc / area);
        }
    }
    out
}

pub fn gap_backward<T: Scalar>(input_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    let inv_area = 1.0 / (h * w) as f64;
    let mut dx = Tensor::zeros(input_shape);
    for in_ in 0..n {
        for ci in 0..c {
            let g = dy.data()[dy.idx2(in_, ci)].to_f64() * inv_area;
            let base = dx.idx4(in_, ci, 0, 0);
            for i in 0..h * w {
                dx.data_mut()[base + i] = T::from_f64(g);
            }
        }
    }
    dx
}

/// Fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `(in, out)`
    pub weight: Tensor<T>,
    /// `(out)`
    pub bias: Tensor<T>,
}

/// `x: (n, in)` -> `(n, out)`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, layer: &Dense<T>) -> Result<Tensor<T>, NnError> {
    let (xs, ws) = (x.shape(), layer.weight.shape());
    if xs.len() != 2 || xs[1] != ws[0] {
        return Err(NnError::ShapeMismatch(format!(
            "dense expects (n, {}), got {xs:?}",
            ws[0]
        )));
    }
    let (n, d_in, d_out) = (xs[0], ws[0], ws[1]);
    let mut out = Tensor::zeros(&[n, d_out]);
    for r in 0..n {
        for o in 0..d_out {
            let mut acc = layer.bias.data()[o].to_f64();
            for i in 0..d_in {
                acc += x.data()[x.idx2(r, i)].to_f64()
                    * layer.weight.data()[layer.weight.idx2(i, o)].to_f64();
            }
            let oi = out.idx2(r, o);
            out.data_mut()[oi] = T::from_f64(acc);
        }
    }
    Ok(out)
}

pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    layer: &Dense<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, d_in, d_out) = (x.shape()[0], layer.weight.shape()[0], layer.weight.shape()[1]);
    let mut dx = vec![0.0f64; x.len()];
    let mut dw = vec![0.0f64; layer.weight.len()];
    let mut db = vec![0.0f64; d_out];
    for r in 0..n {
        for o in 0..d_out {
            let g = dy.data()[dy.idx2(r, o)].to_f64();
            db[o] += g;
            for i in 0..d_in {
                dw[i * d_out + o] += g * x.data()[x.idx2(r, i)].to_f64();
                dx[r * d_in + i] += g * layer.weight.data()[layer.weight.idx2(i, o)].to_f64();
            }
        }
    }
    let cast = |v: Vec<f64>, shape: &[usize]| {
        Tensor::from_vec(shape, v.into_iter().map(T::from_f64).collect())
    };
    (cast(dx, x.shape()), cast(dw, layer.weight.shape()), cast(db, &[d_out]))
}

/// Stable softmax plus mean-reduced cross-entropy.
///
/// Returns the scalar loss and the probabilities `(n, k)`; probabilities are
/// computed with max-subtraction in `f64`.
pub fn softmax_ce_forward<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>), NnError> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(NnError::ShapeMismatch(format!(
            "logits {s:?} vs {} labels",
            labels.len()
        )));
    }
    let (n, k) = (s[0], s[1]);
    if let Some(bad) = labels.iter().find(|l| **l >= k) {
        return Err(NnError::ShapeMismatch(format!("label {bad} out of range for {k} classes")));
    }
    let mut probs = Tensor::zeros(&[n, k]);
    let mut loss = 0.0f64;
    for r in 0..n {
        let row = r * k;
        let mut max = f64::NEG_INFINITY;
        for c in 0..k {
            max = max.max(logits.data()[row + c].to_f64());
        }
        let mut denom = 0.0;
        let mut exps = vec![0.0f64; k];
        for c in 0..k {
            let e = math::exp(logits.data()[row + c].to_f64() - max);
            exps[c] = e;
            denom += e;
        }
        for c in 0..k {
            probs.data_mut()[row + c] = T::from_f64(exps[c] / denom);
        }
        let p = (exps[labels[r]] / denom).max(1e-300);
        loss -= math::log(p);
    }
    Ok((loss / n as f64, probs))
}

/// Gradient of the mean-reduced cross-entropy w.r.t. the logits:
/// `(probs - onehot) / n`.
pub fn softmax_ce_backward<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Tensor<T> {
    let (n, k) = (probs.shape()[0], probs.shape()[1]);
    let inv_n = 1.0 / n as f64;
    let mut d = Tensor::zeros(&[n, k]);
    for r in 0..n {
        for c in 0..k {
            let mut g = probs.data()[r * k + c].to_f64();
            if c == labels[r] {
                g -= 1.0;
            }
            d.data_mut()[r * k + c] = T::from_f64(g * inv_n);
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled<T: Scalar>(shape: &[usize], v: f64) -> Tensor<T> {
        Tensor::from_vec(shape, vec![T::from_f64(v); shape.iter().product()])
    }

    #[test]
    fn conv_1x1_identity() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 3], (0..6).map(|v| v as f64).collect());
        let layer = Conv2d { weight: filled(&[1, 1, 1, 1], 1.0), bias: filled(&[1], 0.0), stride: 1 };
        let y = conv2d_forward(&x, &layer).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_3x3_ones_sums_window() {
        let x = filled::<f64>(&[1, 1, 5, 5], 1.0);
        let layer = Conv2d { weight: filled(&[1, 1, 3, 3], 1.0), bias: filled(&[1], 0.0), stride: 1 };
        let y = conv2d_forward(&x, &layer).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert!(y.data().iter().all(|v| *v == 9.0));
    }

    #[test]
    fn conv_rejects_mismatched_channels_and_small_input() {
        let x = filled::<f32>(&[1, 2, 5, 5], 1.0);
        let layer = Conv2d {
            weight: filled::<f32>(&[4, 3, 3, 3], 0.1),
            bias: filled(&[4], 0.0),
            stride: 1,
        };
        assert!(matches!(conv2d_forward(&x, &layer), Err(NnError::ShapeMismatch(_))));
        let tiny = filled::<f32>(&[1, 3, 2, 2], 1.0);
        assert!(matches!(conv2d_forward(&tiny, &layer), Err(NnError::ShapeMismatch(_))));
    }

    #[test]
    fn relu_and_backward_mask() {
        let x = Tensor::<f64>::from_vec(&[1, 4], vec![-1.0, 0.0, 2.0, -0.5]);
        let y = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0, 0.0]);
        let dy = filled::<f64>(&[1, 4], 1.0);
        let dx = relu_backward(&x, &dy);
        assert_eq!(dx.data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn maxpool_picks_max_and_routes_gradient() {
        let x = Tensor::<f64>::from_vec(
            &[1, 1, 2, 4],
            vec![1.0, 5.0, 2.0, 2.0, 3.0, 4.0, 2.0, 9.0],
        );
        let (y, argmax) = maxpool2_forward(&x);
        assert_eq!(y.shape(), &[1, 1, 1, 2]);
        assert_eq!(y.data(), &[5.0, 9.0]);
        let dy = Tensor::<f64>::from_vec(&[1, 1, 1, 2], vec![1.0, 2.0]);
        let dx = maxpool2_backward(&[1, 1, 2, 4], &argmax, &dy);
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn maxpool_drops_odd_tail() {
        let x = filled::<f32>(&[1, 1, 5, 5], 1.0);
        let (y, _) = maxpool2_forward(&x);
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
    }

    #[test]
    fn gap_means_and_spreads_gradient() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 6.0]);
        let y = gap_forward(&x);
        assert_eq!(y.data(), &[3.0]);
        let dy = Tensor::<f64>::from_vec(&[1, 1], vec![8.0]);
        let dx = gap_backward(&[1, 1, 2, 2], &dy);
        assert_eq!(dx.data(), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn dense_matches_hand_product() {
        let x = Tensor::<f64>::from_vec(&[1, 2], vec![1.0, 2.0]);
        let layer = Dense {
            weight: Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            bias: Tensor::from_vec(&[3], vec![0.5, 0.5, 0.5]),
        };
        let y = dense_forward(&x, &layer).unwrap();
        assert_eq!(y.data(), &[9.5, 12.5, 15.5]);
        assert!(dense_forward(&Tensor::<f64>::zeros(&[1, 3]), &layer).is_err());
    }

    #[test]
    fn softmax_uniform_logits() {
        let logits = filled::<f64>(&[2, 15], 3.7);
        let (_, probs) = softmax_ce_forward(&logits, &[0, 14]).unwrap();
        for p in probs.data() {
            assert!((p - 1.0 / 15.0).abs() < 1e-12);
        }
        for r in 0..2 {
            let sum: f64 = (0..15).map(|c| probs.data()[r * 15 + c]).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn cross_entropy_of_certain_correct_prediction_is_zero() {
        // Large margin drives the softmax to effectively one-hot.
        let mut logits = filled::<f64>(&[1, 3], 0.0);
        logits.data_mut()[1] = 800.0;
        let (loss, _) = softmax_ce_forward(&logits, &[1]).unwrap();
        assert!(loss.abs() < 1e-12);
        let (loss_wrong, _) = softmax_ce_forward(&logits, &[0]).unwrap();
        assert!(loss_wrong > 100.0);
    }

    #[test]
    fn softmax_rejects_bad_labels() {
        let logits = filled::<f32>(&[2, 3], 0.0);
        assert!(matches!(
            softmax_ce_forward(&logits, &[0]),
            Err(NnError::ShapeMismatch(_))
        ));
        assert!(matches!(
            softmax_ce_forward(&logits, &[0, 3]),
            Err(NnError::ShapeMismatch(_))
        ));
    }

    // Central finite differences against every layer's analytic backward.
    fn numgrad(f: &mut dyn FnMut(f64) -> f64, at: f64, eps: f64) -> f64 {
        (f(at + eps) - f(at - eps)) / (2.0 * eps)
    }

    fn rel_err(n: f64, a: f64) -> f64 {
        (n - a).abs() / (n.abs() + a.abs()).max(1e-8)
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = crate::rng::RngState::new(808);
        let x = Tensor::<f64>::from_vec(
            &[1, 2, 5, 5],
            (0..50).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        );
        let layer = Conv2d {
            weight: Tensor::from_vec(&[3, 2, 3, 3], (0..54).map(|_| rng.uniform(-1.0, 1.0)).collect()),
            bias: Tensor::from_vec(&[3], (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect()),
            stride: 1,
        };
        // Scalar objective: weighted sum of outputs, weights fixed.
        let y = conv2d_forward(&x, &layer).unwrap();
        let coeffs: Vec<f64> = (0..y.len()).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let dy = Tensor::from_vec(y.shape(), coeffs.clone());
        let (dx, dw, db) = conv2d_backward(&x, &layer, &dy);

        let eps = 1e-5;
        let objective = |x: &Tensor<f64>, l: &Conv2d<f64>| {
            let y = conv2d_forward(x, l).unwrap();
            y.data().iter().zip(&coeffs).map(|(v, c)| v * c).sum::<f64>()
        };
        for probe in [0usize, 7, 23, 49] {
            let mut f = |v: f64| {
                let mut xp = x.clone();
                xp.data_mut()[probe] = v;
                objective(&xp, &layer)
            };
            let num = numgrad(&mut f, x.data()[probe], eps);
            assert!(rel_err(num, dx.data()[probe]) < 1e-6, "dx[{probe}]");
        }
        for probe in [0usize, 13, 31, 53] {
            let mut f = |v: f64| {
                let mut lp = layer.clone();
                lp.weight.data_mut()[probe] = v;
                objective(&x, &lp)
            };
            let num = numgrad(&mut f, layer.weight.data()[probe], eps);
            assert!(rel_err(num, dw.data()[probe]) < 1e-6, "dw[{probe}]");
        }
        for probe in 0..3 {
            let mut f = |v: f64| {
                let mut lp = layer.clone();
                lp.bias.data_mut()[probe] = v;
                objective(&x, &lp)
            };
            let num = numgrad(&mut f, layer.bias.data()[probe], eps);
            assert!(rel_err(num, db.data()[probe]) < 1e-6, "db[{probe}]");
        }
    }

    #[test]
    fn softmax_ce_gradient_matches_finite_differences() {
        let mut rng = crate::rng::RngState::new(606);
        let logits =
            Tensor::<f64>::from_vec(&[3, 5], (0..15).map(|_| rng.uniform(-2.0, 2.0)).collect());
        let labels = [1usize, 4, 0];
        let (_, probs) = softmax_ce_forward(&logits, &labels).unwrap();
        let grad = softmax_ce_backward(&probs, &labels);
        for probe in 0..15 {
            let mut f = |v: f64| {
                let mut lp = logits.clone();
                lp.data_mut()[probe] = v;
                softmax_ce_forward(&lp, &labels).unwrap().0
            };
            let num = numgrad(&mut f, logits.data()[probe], 1e-6);
            assert!(rel_err(num, grad.data()[probe]) < 1e-7, "dlogits[{probe}]");
        }
    }
}
