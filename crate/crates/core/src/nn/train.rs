//! The training loop: manifest-backed item lists, batch assembly with
//! per-item augmentation, the two-phase fine-tuning schedule, and evaluation.
//!
//! Determinism contract: with a fixed seed and single-threaded execution the
//! shuffle order, every drawn augmentation, and therefore the history and
//! final parameters are all reproducible bit for bit. Shuffling consumes one
//! generator seeded from the run seed; each (epoch, item) pair gets its own
//! augmentation generator so batch boundaries do not affect the draws.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::layers::{softmax_ce_backward, softmax_ce_forward};
use super::model::{Batch, ModelConfig, ModelKind, MultiStreamModel};
use super::{NnError, Scalar, Tensor};
use crate::augment::{apply, sample_policy, AugmentationPolicy, ConcreteAugmentation};
use crate::dataset::{Manifest, SignLabel, SplitTag};
use crate::image::{crop, resize_bilinear, Image, PixelBox};
use crate::rng::{stable_hash64, RngState};

const EVAL_BATCH: usize = 64;
const HAND_PLACEHOLDER: u8 = 128;

/// A frame resolved out of the manifest: provider key, label, and up to two
/// hand boxes in source-image coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameItem {
    pub image: String,
    pub label: SignLabel,
    pub boxes: Vec<PixelBox>,
}

/// Everything tagged for this tag, in manifest order.
pub fn frames_with_tag(manifest: &Manifest, tag: SplitTag) -> Vec<FrameItem> {
    manifest
        .frames()
        .filter(|(_, _, f)| f.split == tag)
        .map(|(_, _, f)| FrameItem {
            image: f.image.clone(),
            label: f.label,
            boxes: f.hand_boxes.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct DataSplit {
    pub train: Vec<FrameItem>,
    pub test: Vec<FrameItem>,
}

impl DataSplit {
    /// Collects the train- and test-tagged frames; validation and unassigned
    /// frames are not part of the loop and are evaluated separately.
    pub fn from_manifest(manifest: &Manifest) -> DataSplit {
        DataSplit {
            train: frames_with_tag(manifest, SplitTag::Train),
            test: frames_with_tag(manifest, SplitTag::Test),
        }
    }
}

/// Source of decoded frames. Keys are the image paths as written in the
/// manifest; the provider decides what they resolve to.
pub trait ImageProvider {
    fn load(&self, key: &str) -> Result<Image, NnError>;
}

/// In-memory provider for tests and synthetic datasets.
#[derive(Debug, Clone, Default)]
pub struct MemoryProvider {
    images: BTreeMap<String, Image>,
}

impl MemoryProvider {
    pub fn new() -> MemoryProvider {
        MemoryProvider::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, img: Image) {
        self.images.insert(key.into(), img);
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

impl ImageProvider for MemoryProvider {
    fn load(&self, key: &str) -> Result<Image, NnError> {
        self.images.get(key).cloned().ok_or_else(|| NnError::Provider {
            path: key.into(),
            detail: "no such key in memory provider".into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub epochs: u32,
    pub learning_rate: f64,
    /// Fraction of each stream's blocks, counted from the output side,
    /// trained during this phase. The head always trains.
    pub trainable_fraction: f64,
}

/// Schedule and optimizer settings. The single-stream model runs `baseline`
/// alone; the multi-stream model runs `phase1` (head only) then `phase2`
/// (partial unfreeze).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub baseline: PhaseConfig,
    pub phase1: PhaseConfig,
    pub phase2: PhaseConfig,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            baseline: PhaseConfig { epochs: 25, learning_rate: 1e-3, trainable_fraction: 1.0 },
            phase1: PhaseConfig { epochs: 20, learning_rate: 1e-3, trainable_fraction: 0.0 },
            phase2: PhaseConfig { epochs: 20, learning_rate: 1e-6, trainable_fraction: 0.6 },
            batch_size: 32,
            momentum: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Zero learning rates are allowed here (they make useful no-op probes);
    /// the command-line layer is stricter.
    pub fn validate(&self) -> Result<(), NnError> {
        for phase in [&self.baseline, &self.phase1, &self.phase2] {
            if phase.epochs == 0 {
                return Err(NnError::BadConfig("epochs must be at least 1"));
            }
            if !phase.learning_rate.is_finite() || phase.learning_rate < 0.0 {
                return Err(NnError::BadConfig("learning rate must be finite and nonnegative"));
            }
            if !(0.0..=1.0).contains(&phase.trainable_fraction) {
                return Err(NnError::BadConfig("trainable fraction must be in [0, 1]"));
            }
        }
        if self.batch_size == 0 {
            return Err(NnError::BadConfig("batch size must be at least 1"));
        }
        if !self.momentum.is_finite() || !(0.0..1.0).contains(&self.momentum) {
            return Err(NnError::BadConfig("momentum must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainPhase {
    Baseline,
    Phase1,
    Phase2,
}

impl TrainPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainPhase::Baseline => "baseline",
            TrainPhase::Phase1 => "phase1",
            TrainPhase::Phase2 => "phase2",
        }
    }
}

/// One row of training history. `epoch` counts from 1 across phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u32,
    pub phase: TrainPhase,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// Diagonal over row sum; classes with no samples report 0.
    pub per_class_recall: Vec<f64>,
}

fn write_view<T: Scalar>(tensor: &mut Tensor<T>, sample: usize, img: &Image) {
    let (h, w) = (img.height() as usize, img.width() as usize);
    for c in 0..3 {
        let base = tensor.idx4(sample, c, 0, 0);
        for y in 0..h {
            for x in 0..w {
                let byte = img.data()[(y * w + x) * 3 + c];
                tensor.data_mut()[base + y * w + x] = T::from_f64(byte as f64 / 255.0);
            }
        }
    }
}

/// The hand view for one box slot: the (clipped) crop of `frame`, resized to
/// the stream resolution, or a mid-gray placeholder when the slot is absent
/// or degenerate. Crops read the augmented frame, so hands see the same
/// geometry and intensity changes as the full view.
fn hand_view(frame: &Image, slot: Option<&PixelBox>, res: u32) -> Image {
    let clipped = slot.and_then(|b| b.clipped_to(frame.width(), frame.height()));
    match clipped {
        Some(b) => {
            let cropped = crop(frame, b).expect("clipped box is nonempty and in bounds");
            resize_bilinear(&cropped, res, res).expect("hand resolution is nonzero")
        }
        None => Image::filled(res, res, [HAND_PLACEHOLDER; 3]).expect("resolution is nonzero"),
    }
}

fn assemble_batch<T: Scalar, P: ImageProvider + ?Sized>(
    kind: ModelKind,
    config: &ModelConfig,
    items: &[&FrameItem],
    augs: Option<&[ConcreteAugmentation]>,
    provider: &P,
) -> Result<Batch<T>, NnError> {
    let n = items.len();
    let gres = config.global_res as usize;
    let hres = config.hand_res as usize;
    let mut global = Tensor::zeros(&[n, 3, gres, gres]);
    let mut hands = if kind == ModelKind::Multi {
        Some((Tensor::zeros(&[n, 3, hres, hres]), Tensor::zeros(&[n, 3, hres, hres])))
    } else {
        None
    };
    let mut labels = Vec::with_capacity(n);

    for (i, item) in items.iter().enumerate() {
        let source = provider.load(&item.image)?;
        let frame = match augs {
            Some(a) => apply(&source, &a[i]),
            None => source,
        };
        let resized = resize_bilinear(&frame, config.global_res, config.global_res)
            .expect("global resolution is nonzero");
        write_view(&mut global, i, &resized);
        if let Some((ha, hb)) = &mut hands {
            write_view(ha, i, &hand_view(&frame, item.boxes.first(), config.hand_res));
            write_view(hb, i, &hand_view(&frame, item.boxes.get(1), config.hand_res));
        }
        labels.push(item.label.id());
    }
    Ok(Batch { global, hands, labels })
}

/// Argmax over one row of `(n, k)` scores; the lowest class id wins ties.
fn argmax_row<T: Scalar>(scores: &Tensor<T>, row: usize) -> usize {
    let k = scores.shape()[1];
    let mut best = 0;
    for c in 1..k {
        if scores.data()[row * k + c] > scores.data()[row * k + best] {
            best = c;
        }
    }
    best
}

/// Minibatch SGD over the split's train frames, following the model kind's
/// schedule. Returns one `EpochStats` row per epoch; the model is left at
/// its final parameters. Momentum state resets at phase boundaries because
/// the trainable set changes there.
pub fn train<T: Scalar, P: ImageProvider + ?Sized>(
    model: &mut MultiStreamModel<T>,
    split: &DataSplit,
    provider: &P,
    policy: Option<&AugmentationPolicy>,
    config: &TrainConfig,
) -> Result<Vec<EpochStats>, NnError> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(NnError::EmptySplit("train"));
    }
    if split.test.is_empty() {
        return Err(NnError::EmptySplit("test"));
    }

    let schedule: Vec<(TrainPhase, PhaseConfig)> = match model.kind() {
        ModelKind::Single => vec![(TrainPhase::Baseline, config.baseline)],
        ModelKind::Multi => {
            vec![(TrainPhase::Phase1, config.phase1), (TrainPhase::Phase2, config.phase2)]
        }
    };

    let mut shuffle_rng = RngState::new(stable_hash64("shuffle", &[config.seed]));
    let mut history = Vec::new();
    let mut epoch: u32 = 0;

    for (phase_tag, phase) in schedule {
        model.set_trainable_fraction(phase.trainable_fraction);
        let mut velocity = Vec::new();
        for _ in 0..phase.epochs {
            let mut order: Vec<usize> = (0..split.train.len()).collect();
            shuffle_rng.shuffle(&mut order);

            let mut loss_sum = 0.0;
            let mut correct = 0usize;
            for chunk in order.chunks(config.batch_size) {
                let items: Vec<&FrameItem> = chunk.iter().map(|i| &split.train[*i]).collect();
                let augs: Option<Vec<ConcreteAugmentation>> = policy.map(|p| {
                    chunk
                        .iter()
                        .map(|i| {
                            let mut rng = RngState::new(stable_hash64(
                                "augment",
                                &[config.seed, epoch as u64, *i as u64],
                            ));
                            sample_policy(p, &mut rng)
                        })
                        .collect()
                });
                let batch =
                    assemble_batch(model.kind(), model.config(), &items, augs.as_deref(), provider)?;
                let (logits, cache) = model.forward_cached(&batch)?;
                let (loss, probs) = softmax_ce_forward(&logits, &batch.labels)?;
                // A NaN logit can still produce a finite loss through the
                // log clamp, so divergence is checked on both.
                if !loss.is_finite() || !logits.all_finite() {
                    return Err(NnError::DivergedLoss { epoch: epoch as usize, loss });
                }
                loss_sum += loss * batch.labels.len() as f64;
                for (r, label) in batch.labels.iter().enumerate() {
                    if argmax_row(&probs, r) == *label {
                        correct += 1;
                    }
                }
                let dlogits = softmax_ce_backward(&probs, &batch.labels);
                let grads = model.backward(&cache, &dlogits);
                model.sgd_step(&grads, &mut velocity, phase.learning_rate, config.momentum);
            }

            epoch += 1;
            let n_train = split.train.len() as f64;
            let eval = evaluate(model, &split.test, provider)?;
            history.push(EpochStats {
                epoch,
                phase: phase_tag,
                train_loss: loss_sum / n_train,
                train_acc: correct as f64 / n_train,
                test_acc: eval.accuracy,
            });
        }
    }
    Ok(history)
}

/// Accuracy and confusion counts over `items`, no augmentation. Accuracy is
/// computed from the finished confusion matrix, so `trace / sum == accuracy`
/// holds exactly.
pub fn evaluate<T: Scalar, P: ImageProvider + ?Sized>(
    model: &MultiStreamModel<T>,
    items: &[FrameItem],
    provider: &P,
) -> Result<EvalResult, NnError> {
    if items.is_empty() {
        return Err(NnError::EmptySet);
    }
    let k = model.config().num_classes;
    let mut confusion = vec![vec![0u64; k]; k];
    for chunk in items.chunks(EVAL_BATCH) {
        let refs: Vec<&FrameItem> = chunk.iter().collect();
        let batch = assemble_batch(model.kind(), model.config(), &refs, None, provider)?;
        let logits = model.forward(&batch)?;
        for (r, item) in chunk.iter().enumerate() {
            confusion[item.label.id()][argmax_row(&logits, r)] += 1;
        }
    }
    let total: u64 = confusion.iter().flatten().sum();
    let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let per_class_recall = (0..k)
        .map(|c| {
            let n: u64 = confusion[c].iter().sum();
            if n == 0 {
                0.0
            } else {
                confusion[c][c] as f64 / n as f64
            }
        })
        .collect();
    Ok(EvalResult { accuracy: trace as f64 / total as f64, confusion, per_class_recall })
}
