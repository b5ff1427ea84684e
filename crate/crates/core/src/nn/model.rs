//! Convolutional classifier with one stream per input view.
//!
//! A stream is a stack of conv3x3 -> relu -> maxpool2 blocks followed by a
//! global average pool, so each stream reduces its view to one feature per
//! channel. The single-stream model uses only the full-frame view; the
//! multi-stream model concatenates the full frame with two hand crops before
//! the classification head.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, gap_backward, gap_forward,
    maxpool2_backward, maxpool2_forward, relu_backward, relu_forward, Conv2d, Dense,
};
use super::{NnError, Scalar, Tensor};
use crate::dataset::NUM_CLASSES;
use crate::math;
use crate::rng::RngState;

pub const INPUT_CHANNELS: usize = 3;
const MIN_RESOLUTION: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Single,
    Multi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Side length the full frame is resized to.
    pub global_res: u32,
    /// Side length each hand crop is resized to.
    pub hand_res: u32,
    /// Output channels of each block in the full-frame stream.
    pub global_channels: Vec<usize>,
    /// Output channels of each block in a hand stream.
    pub hand_channels: Vec<usize>,
    /// Width of the hidden classification layer.
    pub head_hidden: usize,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            global_res: 64,
            hand_res: 32,
            global_channels: vec![8, 16, 32],
            hand_channels: vec![8, 16, 32],
            head_hidden: 64,
            num_classes: NUM_CLASSES,
        }
    }
}

/// Spatial side length after running `blocks` conv3/pool2 blocks, or `None`
/// if some block would underflow.
fn reduced_res(start: u32, blocks: usize) -> Option<usize> {
    let mut r = start as usize;
    for _ in 0..blocks {
        if r < 3 {
            return None;
        }
        r = (r - 2) / 2;
        if r == 0 {
            return None;
        }
    }
    Some(r)
}

fn validate_stream(res: u32, channels: &[usize], what: &'static str) -> Result<(), NnError> {
    if res < MIN_RESOLUTION {
        return Err(NnError::BadResolution { resolution: res, detail: what });
    }
    if channels.is_empty() || channels.contains(&0) {
        return Err(NnError::ShapeMismatch(format!("{what}: empty or zero channel list")));
    }
    if reduced_res(res, channels.len()).is_none() {
        return Err(NnError::BadResolution {
            resolution: res,
            detail: "too many blocks for this resolution",
        });
    }
    Ok(())
}

/// One view's feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBackbone<T> {
    convs: Vec<Conv2d<T>>,
    trainable: Vec<bool>,
}

/// Per-block activations retained for the backward pass.
pub struct StreamCache<T> {
    conv_inputs: Vec<Tensor<T>>,
    pre_relu: Vec<Tensor<T>>,
    pool_input_shapes: Vec<Vec<usize>>,
    pool_argmax: Vec<Vec<usize>>,
    gap_input_shape: Vec<usize>,
}

impl<T: Scalar> StreamBackbone<T> {
    fn init(channels: &[usize], rng: &mut RngState) -> Self {
        let mut convs = Vec::with_capacity(channels.len());
        let mut c_in = INPUT_CHANNELS;
        for &c_out in channels {
            let fan_in = c_in * 9;
            let sd = math::sqrt(2.0 / fan_in as f64);
            let weight = Tensor::from_vec(
                &[c_out, c_in, 3, 3],
                (0..c_out * c_in * 9).map(|_| T::from_f64(rng.next_normal() * sd)).collect(),
            );
            let bias = Tensor::zeros(&[c_out]);
            convs.push(Conv2d { weight, bias, stride: 1 });
            c_in = c_out;
        }
        let trainable = vec![true; convs.len()];
        StreamBackbone { convs, trainable }
    }

    pub fn num_blocks(&self) -> usize {
        self.convs.len()
    }

    /// Features per sample after global average pooling.
    pub fn feature_width(&self) -> usize {
        self.convs.last().map(|c| c.weight.shape()[0]).unwrap_or(0)
    }

    pub fn trainable(&self) -> &[bool] {
        &self.trainable
    }

    /// Lowest trainable block index, or `num_blocks()` when fully frozen.
    fn lowest_trainable(&self) -> usize {
        self.trainable.iter().position(|t| *t).unwrap_or(self.convs.len())
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut cur = x.clone();
        for conv in &self.convs {
            let pre = conv2d_forward(&cur, conv)?;
            let act = relu_forward(&pre);
            cur = maxpool2_forward(&act).0;
        }
        Ok(gap_forward(&cur))
    }

    fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, StreamCache<T>), NnError> {
        let n = self.convs.len();
        let mut cache = StreamCache {
            conv_inputs: Vec::with_capacity(n),
            pre_relu: Vec::with_capacity(n),
            pool_input_shapes: Vec::with_capacity(n),
            pool_argmax: Vec::with_capacity(n),
            gap_input_shape: Vec::new(),
        };
        let mut cur = x.clone();
        for conv in &self.convs {
            let pre = conv2d_forward(&cur, conv)?;
            cache.conv_inputs.push(cur);
            let act = relu_forward(&pre);
            cache.pre_relu.push(pre);
            cache.pool_input_shapes.push(act.shape().to_vec());
            let (pooled, argmax) = maxpool2_forward(&act);
            cache.pool_argmax.push(argmax);
            cur = pooled;
        }
        cache.gap_input_shape = cur.shape().to_vec();
        Ok((gap_forward(&cur), cache))
    }

    /// Walks the blocks top-down, stopping below the lowest trainable block;
    /// frozen blocks below that point get zero gradients without being
    /// evaluated. Returns `(dw, db)` per block in block order.
    fn backward(&self, cache: &StreamCache<T>, dfeat: &Tensor<T>) -> Vec<(Tensor<T>, Tensor<T>)> {
        let n = self.convs.len();
        let lowest = self.lowest_trainable();
        let mut grads: Vec<(Tensor<T>, Tensor<T>)> = self
            .convs
            .iter()
            .map(|c| (Tensor::zeros(c.weight.shape()), Tensor::zeros(c.bias.shape())))
            .collect();
        if lowest == n {
            return grads;
        }
        let mut d = gap_backward(&cache.gap_input_shape, dfeat);
        for i in (lowest..n).rev() {
            let d_act = maxpool2_backward(&cache.pool_input_shapes[i], &cache.pool_argmax[i], &d);
            let d_pre = relu_backward(&cache.pre_relu[i], &d_act);
            let (dx, dw, db) = conv2d_backward(&cache.conv_inputs[i], &self.convs[i], &d_pre);
            grads[i] = (dw, db);
            d = dx;
        }
        grads
    }
}

/// One training or evaluation batch. `hands` carries the two crop views and
/// is required exactly when the model is multi-stream.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub global: Tensor<T>,
    pub hands: Option<(Tensor<T>, Tensor<T>)>,
    pub labels: Vec<usize>,
}

pub struct ModelCache<T> {
    global: StreamCache<T>,
    hands: Option<(StreamCache<T>, StreamCache<T>)>,
    features: Tensor<T>,
    fc1_pre: Tensor<T>,
    fc1_out: Tensor<T>,
}

/// Parameter gradients in the model's canonical parameter order.
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStreamModel<T> {
    kind: ModelKind,
    config: ModelConfig,
    global: StreamBackbone<T>,
    hand_a: Option<StreamBackbone<T>>,
    hand_b: Option<StreamBackbone<T>>,
    fc1: Dense<T>,
    fc2: Dense<T>,
}

/// Initializes a model from `seed`. Weights draw from a single generator in
/// canonical parameter order (He scaling, zero biases), so equal seeds give
/// equal models.
pub fn build_model<T: Scalar>(
    kind: ModelKind,
    config: &ModelConfig,
    seed: u64,
) -> Result<MultiStreamModel<T>, NnError> {
    validate_stream(config.global_res, &config.global_channels, "global stream")?;
    if kind == ModelKind::Multi {
        validate_stream(config.hand_res, &config.hand_channels, "hand stream")?;
    }
    if config.head_hidden == 0 || config.num_classes < 2 {
        return Err(NnError::ShapeMismatch(format!(
            "head_hidden {} / num_classes {} out of range",
            config.head_hidden, config.num_classes
        )));
    }

    let mut rng = RngState::new(seed);
    let global = StreamBackbone::init(&config.global_channels, &mut rng);
    let (hand_a, hand_b) = if kind == ModelKind::Multi {
        (
            Some(StreamBackbone::init(&config.hand_channels, &mut rng)),
            Some(StreamBackbone::init(&config.hand_channels, &mut rng)),
        )
    } else {
        (None, None)
    };

    let feat = global.feature_width()
        + hand_a.as_ref().map_or(0, |h| h.feature_width())
        + hand_b.as_ref().map_or(0, |h| h.feature_width());
    let dense_init = |d_in: usize, d_out: usize, rng: &mut RngState| {
        let sd = math::sqrt(2.0 / d_in as f64);
        Dense {
            weight: Tensor::from_vec(
                &[d_in, d_out],
                (0..d_in * d_out).map(|_| T::from_f64(rng.next_normal() * sd)).collect(),
            ),
            bias: Tensor::zeros(&[d_out]),
        }
    };
    let fc1 = dense_init(feat, config.head_hidden, &mut rng);
    let fc2 = dense_init(config.head_hidden, config.num_classes, &mut rng);

    Ok(MultiStreamModel { kind, config: config.clone(), global, hand_a, hand_b, fc1, fc2 })
}

impl<T: Scalar> MultiStreamModel<T> {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn global_stream(&self) -> &StreamBackbone<T> {
        &self.global
    }

    pub fn hand_streams(&self) -> Option<(&StreamBackbone<T>, &StreamBackbone<T>)> {
        match (&self.hand_a, &self.hand_b) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        }
    }

    fn streams(&self) -> Vec<&StreamBackbone<T>> {
        let mut v = vec![&self.global];
        if let Some(a) = &self.hand_a {
            v.push(a);
        }
        if let Some(b) = &self.hand_b {
            v.push(b);
        }
        v
    }

    /// Marks the top `ceil(fraction * blocks)` blocks of every stream
    /// trainable and freezes the rest. The classification head is always
    /// trainable. `fraction` outside [0, 1] is clamped.
    pub fn set_trainable_fraction(&mut self, fraction: f64) {
        let f = math::clamp_f64(fraction, 0.0, 1.0);
        for stream in [Some(&mut self.global), self.hand_a.as_mut(), self.hand_b.as_mut()]
            .into_iter()
            .flatten()
        {
            let l = stream.convs.len();
            // The subtraction keeps representation noise in f * l from
            // bumping the count up one (e.g. 0.2 * 5 rounding above 1.0).
            let n = (math::ceil(f * l as f64 - 1e-9) as usize).min(l);
            for (i, t) in stream.trainable.iter_mut().enumerate() {
                *t = i >= l - n;
            }
        }
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<(), NnError> {
        let n = batch.labels.len();
        let expect_global =
            [n, INPUT_CHANNELS, self.config.global_res as usize, self.config.global_res as usize];
        if batch.global.shape() != expect_global {
            return Err(NnError::ShapeMismatch(format!(
                "global view {:?}, expected {expect_global:?}",
                batch.global.shape()
            )));
        }
        match (self.kind, &batch.hands) {
            (ModelKind::Single, None) => Ok(()),
            (ModelKind::Multi, Some((a, b))) => {
                let expect =
                    [n, INPUT_CHANNELS, self.config.hand_res as usize, self.config.hand_res as usize];
                if a.shape() != expect || b.shape() != expect {
                    return Err(NnError::ShapeMismatch(format!(
                        "hand views {:?}/{:?}, expected {expect:?}",
                        a.shape(),
                        b.shape()
                    )));
                }
                Ok(())
            }
            (kind, hands) => Err(NnError::ShapeMismatch(format!(
                "model kind {kind:?} but batch hand views present: {}",
                hands.is_some()
            ))),
        }
    }

    fn concat_features(&self, parts: &[&Tensor<T>]) -> Tensor<T> {
        let n = parts[0].shape()[0];
        let total: usize = parts.iter().map(|p| p.shape()[1]).sum();
        let mut out = Tensor::zeros(&[n, total]);
        for r in 0..n {
            let mut at = r * total;
            for p in parts {
                let w = p.shape()[1];
                out.data_mut()[at..at + w].copy_from_slice(&p.data()[r * w..(r + 1) * w]);
                at += w;
            }
        }
        out
    }

    /// Logits for a batch, keeping no intermediate state.
    pub fn forward(&self, batch: &Batch<T>) -> Result<Tensor<T>, NnError> {
        self.check_batch(batch)?;
        let gf = self.global.forward(&batch.global)?;
        let features = match (&self.hand_a, &self.hand_b, &batch.hands) {
            (Some(sa), Some(sb), Some((xa, xb))) => {
                let fa = sa.forward(xa)?;
                let fb = sb.forward(xb)?;
                self.concat_features(&[&gf, &fa, &fb])
            }
            _ => gf,
        };
        let h = relu_forward(&dense_forward(&features, &self.fc1)?);
        dense_forward(&h, &self.fc2)
    }

    /// Logits plus the activations the backward pass needs.
    pub fn forward_cached(&self, batch: &Batch<T>) -> Result<(Tensor<T>, ModelCache<T>), NnError> {
        self.check_batch(batch)?;
        let (gf, gcache) = self.global.forward_cached(&batch.global)?;
        let (features, hands) = match (&self.hand_a, &self.hand_b, &batch.hands) {
            (Some(sa), Some(sb), Some((xa, xb))) => {
                let (fa, ca) = sa.forward_cached(xa)?;
                let (fb, cb) = sb.forward_cached(xb)?;
                (self.concat_features(&[&gf, &fa, &fb]), Some((ca, cb)))
            }
            _ => (gf, None),
        };
        let fc1_pre = dense_forward(&features, &self.fc1)?;
        let fc1_out = relu_forward(&fc1_pre);
        let logits = dense_forward(&fc1_out, &self.fc2)?;
        Ok((logits, ModelCache { global: gcache, hands, features, fc1_pre, fc1_out }))
    }

    /// Parameter gradients given the upstream logit gradient, in canonical
    /// parameter order.
    pub fn backward(&self, cache: &ModelCache<T>, dlogits: &Tensor<T>) -> Gradients<T> {
        let (dh, dw2, db2) = dense_backward(&cache.fc1_out, &self.fc2, dlogits);
        let d_fc1_pre = relu_backward(&cache.fc1_pre, &dh);
        let (dfeat, dw1, db1) = dense_backward(&cache.features, &self.fc1, &d_fc1_pre);

        let n = dfeat.shape()[0];
        let gw = self.global.feature_width();
        let slice_cols = |from: usize, width: usize| {
            let mut t = Tensor::zeros(&[n, width]);
            let total = dfeat.shape()[1];
            for r in 0..n {
                t.data_mut()[r * width..(r + 1) * width]
                    .copy_from_slice(&dfeat.data()[r * total + from..r * total + from + width]);
            }
            t
        };

        let mut tensors = Vec::new();
        let dglobal = slice_cols(0, gw);
        for (dw, db) in self.global.backward(&cache.global, &dglobal) {
            tensors.push(dw);
            tensors.push(db);
        }
        if let (Some(sa), Some(sb), Some((ca, cb))) = (&self.hand_a, &self.hand_b, &cache.hands) {
            let hw = sa.feature_width();
            let da = slice_cols(gw, hw);
            let db_feat = slice_cols(gw + hw, hw);
            for (dw, db) in sa.backward(ca, &da) {
                tensors.push(dw);
                tensors.push(db);
            }
            for (dw, db) in sb.backward(cb, &db_feat) {
                tensors.push(dw);
                tensors.push(db);
            }
        }
        tensors.push(dw1);
        tensors.push(db1);
        tensors.push(dw2);
        tensors.push(db2);
        Gradients { tensors }
    }

    /// All parameters in canonical order: global stream blocks (weight then
    /// bias each), hand stream a, hand stream b, fc1, fc2.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut v = Vec::new();
        for s in self.streams() {
            for c in &s.convs {
                v.push(&c.weight);
                v.push(&c.bias);
            }
        }
        v.push(&self.fc1.weight);
        v.push(&self.fc1.bias);
        v.push(&self.fc2.weight);
        v.push(&self.fc2.bias);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        for s in [Some(&mut self.global), self.hand_a.as_mut(), self.hand_b.as_mut()]
            .into_iter()
            .flatten()
        {
            for c in &mut s.convs {
                v.push(&mut c.weight);
                v.push(&mut c.bias);
            }
        }
        v.push(&mut self.fc1.weight);
        v.push(&mut self.fc1.bias);
        v.push(&mut self.fc2.weight);
        v.push(&mut self.fc2.bias);
        v
    }

    /// Trainability per parameter, aligned with `params()`.
    pub fn trainable_flags(&self) -> Vec<bool> {
        let mut v = Vec::new();
        for s in self.streams() {
            for t in &s.trainable {
                v.push(*t);
                v.push(*t);
            }
        }
        v.extend([true; 4]);
        v
    }

    /// Human-readable parameter names, aligned with `params()`.
    pub fn param_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut stream_names = vec!["global"];
        if self.hand_a.is_some() {
            stream_names.push("hand_a");
            stream_names.push("hand_b");
        }
        for (s, name) in self.streams().iter().zip(stream_names) {
            for i in 0..s.convs.len() {
                v.push(format!("{name}.block{i}.weight"));
                v.push(format!("{name}.block{i}.bias"));
            }
        }
        for head in ["fc1", "fc2"] {
            v.push(format!("{head}.weight"));
            v.push(format!("{head}.bias"));
        }
        v
    }

    /// One SGD step with momentum. `velocity` must be aligned with
    /// `params()` and is created on first use; frozen parameters are left
    /// untouched, including their velocity.
    pub fn sgd_step(
        &mut self,
        grads: &Gradients<T>,
        velocity: &mut Vec<Tensor<T>>,
        lr: f64,
        momentum: f64,
    ) {
        let flags = self.trainable_flags();
        let params = self.params_mut();
        assert_eq!(grads.tensors.len(), params.len());
        if velocity.is_empty() {
            *velocity = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        }
        for (((p, g), v), trainable) in
            params.into_iter().zip(&grads.tensors).zip(velocity.iter_mut()).zip(flags)
        {
            if !trainable {
                continue;
            }
            for i in 0..p.len() {
                let vel = momentum * v.data()[i].to_f64() + g.data()[i].to_f64();
                v.data_mut()[i] = T::from_f64(vel);
                p.data_mut()[i] -= T::from_f64(lr * vel);
            }
        }
    }
}
