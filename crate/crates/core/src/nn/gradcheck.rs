//! Central finite-difference verification of the analytic gradients.
//!
//! Runs the full loss (forward, softmax cross-entropy) in whatever scalar
//! the model carries; call it on an `f64` model so the comparison is not
//! drowned in storage noise.

use alloc::vec::Vec;

use super::layers::{softmax_ce_backward, softmax_ce_forward};
use super::model::{Batch, MultiStreamModel};
use super::NnError;
use crate::rng::RngState;

fn loss_of(model: &MultiStreamModel<f64>, batch: &Batch<f64>) -> Result<f64, NnError> {
    let logits = model.forward(batch)?;
    Ok(softmax_ce_forward(&logits, &batch.labels)?.0)
}

/// Maximum relative error between analytic and central finite-difference
/// gradients, over up to `max_coords` trainable parameter coordinates chosen
/// by `seed`. Frozen parameters are excluded: their analytic gradient is
/// zero by the freeze contract, not by calculus.
///
/// Relative error is `|num - ana| / max(|num| + |ana|, 1e-8)`.
pub fn gradient_check(
    model: &mut MultiStreamModel<f64>,
    batch: &Batch<f64>,
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> Result<f64, NnError> {
    let (logits, cache) = model.forward_cached(batch)?;
    let (_, probs) = softmax_ce_forward(&logits, &batch.labels)?;
    let dlogits = softmax_ce_backward(&probs, &batch.labels);
    let grads = model.backward(&cache, &dlogits);

    let flags = model.trainable_flags();
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (pi, p) in model.params().iter().enumerate() {
        if flags[pi] {
            coords.extend((0..p.len()).map(|ci| (pi, ci)));
        }
    }
    let mut rng = RngState::new(seed);
    rng.shuffle(&mut coords);
    coords.truncate(max_coords);

    let mut worst = 0.0f64;
    for (pi, ci) in coords {
        let original = model.params()[pi].data()[ci];
        model.params_mut()[pi].data_mut()[ci] = original + eps;
        let up = loss_of(model, batch)?;
        model.params_mut()[pi].data_mut()[ci] = original - eps;
        let down = loss_of(model, batch)?;
        model.params_mut()[pi].data_mut()[ci] = original;

        let numeric = (up - down) / (2.0 * eps);
        let analytic = grads.tensors[pi].data()[ci];
        let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-8);
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{build_model, ModelConfig, ModelKind};
    use crate::nn::Tensor;

    fn random_batch(model: &MultiStreamModel<f64>, n: usize, seed: u64) -> Batch<f64> {
        let mut rng = RngState::new(seed);
        let mut fill = |res: usize| {
            Tensor::from_vec(
                &[n, 3, res, res],
                (0..n * 3 * res * res).map(|_| rng.uniform(0.0, 1.0)).collect(),
            )
        };
        let global = fill(model.config().global_res as usize);
        let hands = (model.kind() == ModelKind::Multi)
            .then(|| {
                let r = model.config().hand_res as usize;
                (fill(r), fill(r))
            });
        let labels = (0..n).map(|i| (i * 7) % model.config().num_classes).collect();
        Batch { global, hands, labels }
    }

    fn config() -> ModelConfig {
        ModelConfig {
            global_res: 12,
            hand_res: 8,
            global_channels: alloc::vec![3, 5],
            hand_channels: alloc::vec![4],
            head_hidden: 10,
            num_classes: 15,
        }
    }

    #[test]
    fn single_stream_gradients_check_out() {
        let mut model = build_model::<f64>(ModelKind::Single, &config(), 31).unwrap();
        let batch = random_batch(&model, 3, 77);
        let err = gradient_check(&mut model, &batch, 1e-5, 250, 5).unwrap();
        assert!(err < 1e-7, "max relative error {err}");
    }

    #[test]
    fn multi_stream_gradients_check_out_through_fusion() {
        let mut model = build_model::<f64>(ModelKind::Multi, &config(), 32).unwrap();
        let batch = random_batch(&model, 2, 78);
        let err = gradient_check(&mut model, &batch, 1e-5, 250, 6).unwrap();
        assert!(err < 1e-7, "max relative error {err}");
    }

    #[test]
    fn partial_freeze_still_checks_out_on_trainable_set() {
        let mut model = build_model::<f64>(ModelKind::Multi, &config(), 33).unwrap();
        model.set_trainable_fraction(0.5);
        let batch = random_batch(&model, 2, 79);
        let err = gradient_check(&mut model, &batch, 1e-5, 250, 7).unwrap();
        assert!(err < 1e-7, "max relative error {err}");
    }
}
