//! Synthetic datasets with known structure. These exist so the training and
//! harness layers can be exercised end to end without the (private) video
//! corpus: a trivially separable solid-color set, a set whose class signal
//! lives only inside the annotated hand boxes, and a ready-to-run experiment
//! bundle built from the first.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use signbench_core::dataset::{
    ClipRecord, FrameRecord, Manifest, SignLabel, SplitMode, SplitTag, NUM_CLASSES,
};
use signbench_core::nn::{MemoryProvider, ModelConfig, ModelKind, PhaseConfig, TrainConfig};
use signbench_core::{Image, Mask, PixelBox, RngState};

use crate::error::Result;
use crate::harness::{Background, Condition, ExperimentConfig, SplitSpec};
use crate::{image_io, manifest_io};

/// A generated dataset: the manifest plus every referenced file, keyed by
/// the manifest-relative path.
pub struct SynthDataset {
    pub manifest: Manifest,
    pub images: BTreeMap<String, Image>,
    pub masks: BTreeMap<String, Mask>,
}

impl SynthDataset {
    /// In-memory provider over the generated frames, for training without
    /// touching disk.
    pub fn memory_provider(&self) -> MemoryProvider {
        let mut p = MemoryProvider::new();
        for (key, img) in &self.images {
            p.insert(key.clone(), img.clone());
        }
        p
    }

    /// Writes frames, masks, and the manifest under `dir`; returns the
    /// manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        for (key, img) in &self.images {
            image_io::write_image(&dir.join(key), img)?;
        }
        for (key, mask) in &self.masks {
            image_io::write_mask(&dir.join(key), mask)?;
        }
        let manifest_path = dir.join("manifest.json");
        manifest_io::save_manifest(&manifest_path, &self.manifest)?;
        Ok(manifest_path)
    }
}

/// Distinct base color for each class; spacing is wide enough to survive
/// the per-pixel noise added on top.
fn class_color(c: usize) -> [u8; 3] {
    let r = 40 + 90 * (c % 3) as u8;
    let g = 30 + 48 * ((c / 3) % 5) as u8;
    let b = ((c * 97) % 200 + 28) as u8;
    [r, g, b]
}

fn noisy_solid(size: u32, color: [u8; 3], rng: &mut RngState) -> Image {
    let n = (size * size) as usize;
    let mut data = Vec::with_capacity(n * 3);
    for _ in 0..n {
        for ch in color {
            let jitter = rng.index(17) as i32 - 8;
            data.push((ch as i32 + jitter).clamp(0, 255) as u8);
        }
    }
    Image::new(size, size, data).expect("size is nonzero")
}

/// One clip per class of solid-color frames (plus pixel noise). `layout`
/// gives the per-class frame counts in clip order, e.g.
/// `[(Train, 3), (Test, 1)]`. Linearly separable by construction.
pub fn solid_colors(size: u32, layout: &[(SplitTag, usize)], seed: u64) -> SynthDataset {
    let mut rng = RngState::new(seed);
    let mut manifest = Manifest::new();
    let mut images = BTreeMap::new();

    for label in SignLabel::all() {
        let mut frames = Vec::new();
        let mut idx = 0usize;
        for &(tag, count) in layout {
            for _ in 0..count {
                let key = format!("frames/{}_{:02}.ppm", label.name(), idx);
                images.insert(key.clone(), noisy_solid(size, class_color(label.id()), &mut rng));
                frames.push(FrameRecord {
                    image: key,
                    label,
                    mask: None,
                    hand_boxes: vec![],
                    split: tag,
                });
                idx += 1;
            }
        }
        manifest.clips.push(ClipRecord {
            clip_id: format!("solid-{}", label.name()),
            interpreter: if label.id() % 2 == 0 { "s1".into() } else { "s2".into() },
            capture_fps: 30,
            frames,
        });
    }
    SynthDataset { manifest, images, masks: BTreeMap::new() }
}

pub const CHECKER_FRAME: u32 = 128;
pub const CHECKER_BOX: u32 = 8;

/// Amplitude triple for a class's checkerboard; all 15 are distinct and at
/// least 20 apart in one channel.
fn checker_amplitude(c: usize) -> [i32; 3] {
    [20 + 20 * (c % 5) as i32, 20 + 40 * (c / 5) as i32, 60]
}

fn draw_checker(img: &mut Image, bx: PixelBox, amp: [i32; 3]) {
    for y in bx.y0..bx.y1 {
        for x in bx.x0..bx.x1 {
            let sign = if (x + y) % 2 == 0 { 1 } else { -1 };
            let px = [
                (128 + sign * amp[0]) as u8,
                (128 + sign * amp[1]) as u8,
                (128 + sign * amp[2]) as u8,
            ];
            img.set_pixel(x, y, px);
        }
    }
}

/// Positions aligned to 4 pixels so that bilinear reduction by an even
/// integer factor averages whole checker cells; see `hand_checker`.
fn aligned_box(rng: &mut RngState, x_lo: u32, x_hi: u32) -> PixelBox {
    let x_slots = (x_hi - x_lo - CHECKER_BOX) / 4 + 1;
    let y_slots = (CHECKER_FRAME - CHECKER_BOX) / 4 + 1;
    let x0 = x_lo + 4 * rng.index(x_slots as usize) as u32;
    let y0 = 4 * rng.index(y_slots as usize) as u32;
    PixelBox::new(x0, y0, x0 + CHECKER_BOX, y0 + CHECKER_BOX)
}

/// Dataset whose class signal lives only inside the two annotated hand
/// boxes. Each box holds a 1-pixel checkerboard with a class-specific
/// amplitude around mid-gray. Because every horizontally adjacent pair of
/// checker pixels averages to exactly 128, downscaling the full frame by an
/// even integer factor (128 -> 64 or 128 -> 32) erases the pattern
/// completely: the global view of every box is a flat gray patch, identical
/// across classes. A crop resized up keeps the contrast. A global-only
/// model therefore sits at chance while the hand streams can separate the
/// classes; box positions vary per frame but carry no label information.
pub fn hand_checker(train_per_class: usize, test_per_class: usize, seed: u64) -> SynthDataset {
    let mut rng = RngState::new(seed);
    let mut manifest = Manifest::new();
    let mut images = BTreeMap::new();

    let background = {
        let mut data = Vec::with_capacity((CHECKER_FRAME * CHECKER_FRAME) as usize * 3);
        for y in 0..CHECKER_FRAME {
            for x in 0..CHECKER_FRAME {
                data.extend_from_slice(&[(x * 2) as u8, (y * 2) as u8, 64]);
            }
        }
        Image::new(CHECKER_FRAME, CHECKER_FRAME, data).expect("fixed size")
    };

    for label in SignLabel::all() {
        let amp = checker_amplitude(label.id());
        let mut frames = Vec::new();
        for idx in 0..train_per_class + test_per_class {
            let mut img = background.clone();
            // One box in each lateral half, so the pair never overlaps.
            let left = aligned_box(&mut rng, 0, CHECKER_FRAME / 2);
            let right = aligned_box(&mut rng, CHECKER_FRAME / 2, CHECKER_FRAME);
            for bx in [left, right] {
                let jitter =
                    [0, 1, 2].map(|i| (amp[i] + rng.index(7) as i32 - 3).clamp(4, 110));
                draw_checker(&mut img, bx, jitter);
            }
            let key = format!("frames/{}_{:02}.ppm", label.name(), idx);
            images.insert(key.clone(), img);
            frames.push(FrameRecord {
                image: key,
                label,
                mask: None,
                hand_boxes: vec![left, right],
                split: if idx < train_per_class { SplitTag::Train } else { SplitTag::Test },
            });
        }
        manifest.clips.push(ClipRecord {
            clip_id: format!("checker-{}", label.name()),
            interpreter: "s1".into(),
            capture_fps: 30,
            frames,
        });
    }
    SynthDataset { manifest, images, masks: BTreeMap::new() }
}

/// Model sized for the checker dataset: the global stream sees the frame
/// reduced 128 -> 32 (even factor, so box contents cancel to flat gray) and
/// hand streams see 8 -> 16 upscaled crops.
pub fn checker_model_config() -> ModelConfig {
    ModelConfig {
        global_res: 32,
        hand_res: 16,
        global_channels: vec![8, 16],
        hand_channels: vec![8, 16],
        head_hidden: 32,
        num_classes: NUM_CLASSES,
    }
}

/// Writes a self-contained experiment under `dir`: a solid-color dataset
/// with one validation frame per class (always the clip's first frame, so
/// it survives any rate subsampling) and a two-condition, two-repeat config
/// comparing full against half capture rate. Returns the config path.
pub fn experiment_bundle(dir: &Path) -> Result<PathBuf> {
    let data = solid_colors(16, &[(SplitTag::Validation, 1), (SplitTag::Unassigned, 10)], 11);
    data.write(&dir.join("dataset"))?;

    let config = ExperimentConfig {
        manifest_path: "dataset/manifest.json".into(),
        conditions: vec![
            Condition {
                name: "full-rate".into(),
                fps: None,
                policy: None,
                background: Background::Original,
            },
            Condition {
                name: "half-rate".into(),
                fps: Some(15),
                policy: None,
                background: Background::Original,
            },
        ],
        repeats: 2,
        seed: 7,
        kind: ModelKind::Single,
        model: ModelConfig {
            global_res: 16,
            hand_res: 16,
            global_channels: vec![6, 12],
            hand_channels: vec![6, 12],
            head_hidden: 24,
            num_classes: NUM_CLASSES,
        },
        train: TrainConfig {
            baseline: PhaseConfig { epochs: 4, learning_rate: 0.05, trainable_fraction: 1.0 },
            batch_size: 16,
            momentum: 0.9,
            ..TrainConfig::default()
        },
        split: SplitSpec { fraction: 0.8, mode: SplitMode::Frames },
    };
    let config_path = dir.join("config.json");
    let mut text = serde_json::to_string_pretty(&config)
        .expect("experiment config serializes");
    text.push('\n');
    std::fs::write(&config_path, text).map_err(crate::error::io_at(&config_path))?;
    Ok(config_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use signbench_core::image::resize_bilinear;

    #[test]
    fn solid_dataset_has_the_requested_layout() {
        let d = solid_colors(8, &[(SplitTag::Train, 3), (SplitTag::Test, 1)], 5);
        assert_eq!(d.manifest.total_frames(), 60);
        assert_eq!(d.manifest.count_with_tag(SplitTag::Train), 45);
        assert_eq!(d.manifest.count_with_tag(SplitTag::Test), 15);
        assert_eq!(d.images.len(), 60);
        assert!(signbench_core::dataset::validate_structure(&d.manifest).is_empty());
    }

    #[test]
    fn class_colors_are_distinct() {
        let colors: Vec<_> = (0..NUM_CLASSES).map(class_color).collect();
        for i in 0..colors.len() {
            for j in i + 1..colors.len() {
                assert_ne!(colors[i], colors[j], "classes {i} and {j}");
            }
        }
    }

    #[test]
    fn checker_boxes_vanish_in_the_reduced_global_view() {
        let d = hand_checker(2, 1, 3);
        for (_, _, frame) in d.manifest.frames() {
            let img = &d.images[&frame.image];
            let small = resize_bilinear(img, 32, 32).unwrap();
            for bx in &frame.hand_boxes {
                // Box corners map to the reduced grid at 1/4 scale.
                for y in bx.y0 / 4..bx.y1 / 4 {
                    for x in bx.x0 / 4..bx.x1 / 4 {
                        assert_eq!(
                            small.pixel(x, y),
                            [128, 128, 128],
                            "box pixel survived reduction at ({x},{y})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn checker_crops_keep_class_contrast() {
        let d = hand_checker(1, 0, 9);
        for (_, _, frame) in d.manifest.frames() {
            let img = &d.images[&frame.image];
            let bx = frame.hand_boxes[0];
            let cropped = signbench_core::image::crop(img, bx).unwrap();
            let data = cropped.data();
            let (mut lo, mut hi) = (255u8, 0u8);
            for &v in data.iter().step_by(3) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            assert!(hi as i32 - lo as i32 >= 30, "crop lost its contrast");
        }
    }

    #[test]
    fn bundle_writes_dataset_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = experiment_bundle(dir.path()).unwrap();
        let config = ExperimentConfig::load(&config_path).unwrap().0;
        assert_eq!(config.conditions.len(), 2);
        assert_eq!(config.repeats, 2);
        let manifest =
            manifest_io::load_manifest(&dir.path().join("dataset/manifest.json")).unwrap();
        assert_eq!(manifest.count_with_tag(SplitTag::Validation), 15);
        assert_eq!(manifest.total_frames(), 165);
    }
}
