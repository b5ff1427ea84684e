//! Dataset manifests: the 15-word sign taxonomy, frame records with optional
//! masks and hand boxes, FPS subsampling, and train/test splitting.
//!
//! A manifest is plain data (serde-friendly, JSON on disk); every operation
//! here returns a new manifest and leaves its input untouched. Validation
//! frames are tagged by the recording pipeline and are never reassigned by
//! [`split_frames`].

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::image::PixelBox;
use crate::rng::RngState;

/// The 15 classes: 14 signed words plus `formation`, the label for rest
/// position and mid-sign transitions.
pub const CLASS_NAMES: [&str; 15] = [
    "I",
    "my",
    "you",
    "we",
    "you-plural",
    "your",
    "woman",
    "man",
    "car",
    "motorcycle",
    "bus",
    "supermarket",
    "hospital",
    "bank",
    "formation",
];

pub const NUM_CLASSES: usize = 15;

/// One of the 15 classes, stored by index into [`CLASS_NAMES`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignLabel(u8);

impl SignLabel {
    pub const FORMATION: SignLabel = SignLabel(14);

    pub fn from_id(id: usize) -> Option<SignLabel> {
        if id < NUM_CLASSES {
            Some(SignLabel(id as u8))
        } else {
            None
        }
    }

    pub fn from_name(name: &str) -> Option<SignLabel> {
        CLASS_NAMES.iter().position(|n| *n == name).map(|i| SignLabel(i as u8))
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.0 as usize]
    }

    pub fn all() -> impl Iterator<Item = SignLabel> {
        (0..NUM_CLASSES).map(|i| SignLabel(i as u8))
    }
}

impl core::fmt::Display for SignLabel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for SignLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for SignLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        SignLabel::from_name(&name)
            .ok_or_else(|| serde::de::Error::custom(alloc::format!("unknown label \"{name}\"")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    #[default]
    Unassigned,
    Train,
    Test,
    Validation,
}

impl SplitTag {
    fn is_unassigned(&self) -> bool {
        *self == SplitTag::Unassigned
    }
}

/// One extracted video frame. Paths are relative to the manifest's directory;
/// resolution happens in the IO layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub image: String,
    pub label: SignLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hand_boxes: Vec<PixelBox>,
    #[serde(default, skip_serializing_if = "SplitTag::is_unassigned")]
    pub split: SplitTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub interpreter: String,
    pub capture_fps: u32,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub class_names: Vec<String>,
    pub clips: Vec<ClipRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_note: Option<String>,
}

impl Manifest {
    /// Empty manifest carrying the canonical class list.
    pub fn new() -> Manifest {
        Manifest {
            class_names: CLASS_NAMES.iter().map(|s| String::from(*s)).collect(),
            clips: Vec::new(),
            source_note: None,
        }
    }

    pub fn total_frames(&self) -> usize {
        self.clips.iter().map(|c| c.frames.len()).sum()
    }

    /// Frames in manifest order as `(clip_index, frame_index)` references.
    pub fn frames(&self) -> impl Iterator<Item = (usize, usize, &FrameRecord)> {
        self.clips
            .iter()
            .enumerate()
            .flat_map(|(ci, clip)| clip.frames.iter().enumerate().map(move |(fi, f)| (ci, fi, f)))
    }

    pub fn count_with_tag(&self, tag: SplitTag) -> usize {
        self.frames().filter(|(_, _, f)| f.split == tag).count()
    }
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetError {
    /// Target rate is zero, or above the source rate.
    InvalidRate { src: u32, dst: u32 },
    /// Train fraction outside (0, 1).
    BadFraction(f64),
    /// A class has no splittable frames, so stratification is impossible.
    EmptyClass(SignLabel),
}

impl core::fmt::Display for DatasetError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DatasetError::InvalidRate { src, dst } => {
                write!(f, "cannot subsample {src} fps to {dst} fps")
            }
            DatasetError::BadFraction(v) => {
                write!(f, "train fraction must be strictly between 0 and 1, got {v}")
            }
            DatasetError::EmptyClass(label) => {
                write!(f, "class \"{label}\" has no frames to stratify")
            }
        }
    }
}

impl core::error::Error for DatasetError {}

/// Frame indices kept when decimating `n_frames` recorded at `src_fps` down
/// to `dst_fps`: `floor(k * src / dst)` for `k = 0, 1, 2, ...` while in range.
///
/// The selection is strictly increasing and keeps `ceil(n * dst / src)`
/// frames, so totals shrink by the rate ratio to within one frame.
pub fn subsample_indices(
    n_frames: usize,
    src_fps: u32,
    dst_fps: u32,
) -> Result<Vec<usize>, DatasetError> {
    if src_fps == 0 || dst_fps == 0 || dst_fps > src_fps {
        return Err(DatasetError::InvalidRate { src: src_fps, dst: dst_fps });
    }
    let mut out = Vec::new();
    let mut k: u64 = 0;
    loop {
        let idx = (k * src_fps as u64 / dst_fps as u64) as usize;
        if idx >= n_frames {
            break;
        }
        out.push(idx);
        k += 1;
    }
    Ok(out)
}

/// Decimate every clip to `dst_fps`. Each clip must have been captured at
/// `dst_fps` or faster.
pub fn subsample_manifest(m: &Manifest, dst_fps: u32) -> Result<Manifest, DatasetError> {
    let mut out = m.clone();
    for clip in &mut out.clips {
        if dst_fps > clip.capture_fps {
            return Err(DatasetError::InvalidRate { src: clip.capture_fps, dst: dst_fps });
        }
        let keep = subsample_indices(clip.frames.len(), clip.capture_fps, dst_fps)?;
        clip.frames = keep.into_iter().map(|i| clip.frames[i].clone()).collect();
        clip.capture_fps = dst_fps;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Per-class seeded shuffle; `round(n_c * fraction)` frames of each class
    /// go to train, the rest to test.
    #[default]
    FrameStratified,
    /// Whole clips assigned greedily per class so near-duplicate neighboring
    /// frames never straddle the split.
    ClipLevel,
}

/// Assign train/test tags to every non-validation frame of a copy of `m`.
///
/// Validation tags are preserved untouched; existing train/test tags are
/// reassigned from scratch. Deterministic given `(seed, mode)`.
pub fn split_frames(
    m: &Manifest,
    train_fraction: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<Manifest, DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(train_fraction));
    }
    let mut out = m.clone();
    let mut rng = RngState::new(seed);
    match mode {
        SplitMode::FrameStratified => split_stratified(&mut out, train_fraction, &mut rng)?,
        SplitMode::ClipLevel => split_clips(&mut out, train_fraction, &mut rng),
    }
    Ok(out)
}

fn split_stratified(
    m: &mut Manifest,
    fraction: f64,
    rng: &mut RngState,
) -> Result<(), DatasetError> {
    let mut per_class: Vec<Vec<(usize, usize)>> = (0..NUM_CLASSES).map(|_| Vec::new()).collect();
    for (ci, fi, frame) in m.frames() {
        if frame.split != SplitTag::Validation {
            per_class[frame.label.id()].push((ci, fi));
        }
    }
    for label in SignLabel::all() {
        if per_class[label.id()].is_empty() {
            return Err(DatasetError::EmptyClass(label));
        }
    }
    let mut assign: Vec<(usize, usize, SplitTag)> = Vec::new();
    for label in SignLabel::all() {
        let members = &mut per_class[label.id()];
        rng.shuffle(members);
        let n_train = crate::math::round(members.len() as f64 * fraction) as usize;
        let n_train = n_train.min(members.len());
        for (rank, (ci, fi)) in members.iter().enumerate() {
            let tag = if rank < n_train { SplitTag::Train } else { SplitTag::Test };
            assign.push((*ci, *fi, tag));
        }
    }
    for (ci, fi, tag) in assign {
        m.clips[ci].frames[fi].split = tag;
    }
    Ok(())
}

/// Modal label of a clip's splittable frames; ties break toward the lower id.
fn modal_label(clip: &ClipRecord) -> Option<SignLabel> {
    let mut counts = [0usize; NUM_CLASSES];
    for f in &clip.frames {
        if f.split != SplitTag::Validation {
            counts[f.label.id()] += 1;
        }
    }
    let (best, n) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .unwrap();
    if n == &0 {
        None
    } else {
        SignLabel::from_id(best)
    }
}

fn split_clips(m: &mut Manifest, fraction: f64, rng: &mut RngState) {
    let mut per_class: Vec<Vec<usize>> = (0..NUM_CLASSES).map(|_| Vec::new()).collect();
    for (ci, clip) in m.clips.iter().enumerate() {
        if let Some(label) = modal_label(clip) {
            per_class[label.id()].push(ci);
        }
    }
    for label in SignLabel::all() {
        let clip_ids = &mut per_class[label.id()];
        if clip_ids.is_empty() {
            continue;
        }
        rng.shuffle(clip_ids);
        let mut train_frames = 0usize;
        let mut total_frames = 0usize;
        for &ci in clip_ids.iter() {
            let n = m.clips[ci]
                .frames
                .iter()
                .filter(|f| f.split != SplitTag::Validation)
                .count();
            // Pick the side that keeps this class's running train share
            // closest to the target; ties go to train.
            let if_train = (train_frames + n) as f64 / (total_frames + n) as f64;
            let if_test = train_frames as f64 / (total_frames + n) as f64;
            let tag = if (if_train - fraction).abs() <= (if_test - fraction).abs() {
                train_frames += n;
                SplitTag::Train
            } else {
                SplitTag::Test
            };
            total_frames += n;
            for f in &mut m.clips[ci].frames {
                if f.split != SplitTag::Validation {
                    f.split = tag;
                }
            }
        }
    }
}

/// A structural problem found in a manifest. Violations are data, not errors;
/// an empty list means the manifest is well formed.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateClipId { clip_id: String },
    EmptyClip { clip_id: String },
    ZeroCaptureFps { clip_id: String },
    NonCanonicalClassNames,
    TooManyHandBoxes { clip_id: String, frame: usize, got: usize },
    MalformedBox { clip_id: String, frame: usize, which: usize },
    MissingFile { path: String },
    UnreadableImage { path: String, detail: String },
    MaskDimensionMismatch { path: String, image: (u32, u32), mask: (u32, u32) },
    BoxOutsideImage { clip_id: String, frame: usize, which: usize },
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Violation::DuplicateClipId { clip_id } => write!(f, "duplicate clip_id \"{clip_id}\""),
            Violation::EmptyClip { clip_id } => write!(f, "clip \"{clip_id}\" has no frames"),
            Violation::ZeroCaptureFps { clip_id } => {
                write!(f, "clip \"{clip_id}\" has capture_fps 0")
            }
            Violation::NonCanonicalClassNames => {
                write!(f, "class_names does not match the canonical 15-word list")
            }
            Violation::TooManyHandBoxes { clip_id, frame, got } => {
                write!(f, "clip \"{clip_id}\" frame {frame}: {got} hand boxes, at most 2 allowed")
            }
            Violation::MalformedBox { clip_id, frame, which } => {
                write!(f, "clip \"{clip_id}\" frame {frame}: hand box {which} is empty or inverted")
            }
            Violation::MissingFile { path } => write!(f, "missing file: {path}"),
            Violation::UnreadableImage { path, detail } => {
                write!(f, "cannot read {path}: {detail}")
            }
            Violation::MaskDimensionMismatch { path, image, mask } => write!(
                f,
                "mask {path} is {}x{}, image is {}x{}",
                mask.0, mask.1, image.0, image.1
            ),
            Violation::BoxOutsideImage { clip_id, frame, which } => {
                write!(f, "clip \"{clip_id}\" frame {frame}: hand box {which} exceeds the image")
            }
        }
    }
}

/// Structural checks that need no file access: id uniqueness, class list,
/// frame counts, fps, and box shape. The IO layer layers file existence and
/// dimension checks on top of this.
pub fn validate_structure(m: &Manifest) -> Vec<Violation> {
    let mut out = Vec::new();
    let canonical = m.class_names.len() == NUM_CLASSES
        && m.class_names.iter().zip(CLASS_NAMES.iter()).all(|(a, b)| a == b);
    if !canonical {
        out.push(Violation::NonCanonicalClassNames);
    }
    let mut seen: Vec<&str> = Vec::new();
    for clip in &m.clips {
        if seen.contains(&clip.clip_id.as_str()) {
            out.push(Violation::DuplicateClipId { clip_id: clip.clip_id.clone() });
        } else {
            seen.push(&clip.clip_id);
        }
        if clip.frames.is_empty() {
            out.push(Violation::EmptyClip { clip_id: clip.clip_id.clone() });
        }
        if clip.capture_fps == 0 {
            out.push(Violation::ZeroCaptureFps { clip_id: clip.clip_id.clone() });
        }
        for (fi, frame) in clip.frames.iter().enumerate() {
            if frame.hand_boxes.len() > 2 {
                out.push(Violation::TooManyHandBoxes {
                    clip_id: clip.clip_id.clone(),
                    frame: fi,
                    got: frame.hand_boxes.len(),
                });
            }
            for (bi, b) in frame.hand_boxes.iter().enumerate() {
                if b.is_empty() {
                    out.push(Violation::MalformedBox {
                        clip_id: clip.clip_id.clone(),
                        frame: fi,
                        which: bi,
                    });
                }
            }
        }
    }
    out
}
