//! Manifest files and the disk-backed frame provider. Image and mask paths
//! inside a manifest are relative to the manifest's own directory.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use signbench_core::dataset::Manifest;
use signbench_core::nn::{ImageProvider, NnError};
use signbench_core::Image;

use crate::error::{io_at, BenchError, Result};
use crate::image_io;

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| BenchError::Format { path: path.to_path_buf(), detail: e.to_string() })
}

pub fn save_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_at(parent))?;
    }
    let mut text = serde_json::to_string_pretty(manifest)
        .map_err(|e| BenchError::Format { path: path.to_path_buf(), detail: e.to_string() })?;
    text.push('\n');
    fs::write(path, text).map_err(io_at(path))
}

/// Directory that relative paths inside the manifest resolve against.
pub fn manifest_dir(manifest_path: &Path) -> PathBuf {
    match manifest_path.parent() {
        Some(p) if p.as_os_str().is_empty() => PathBuf::from("."),
        Some(p) => p.to_path_buf(),
        None => PathBuf::from("."),
    }
}

/// Frame provider reading PPMs under a base directory, with a decoded-image
/// cache. The cache never invalidates; the training loop treats dataset
/// files as immutable for the lifetime of a run.
pub struct DiskProvider {
    base: PathBuf,
    cache: RefCell<HashMap<String, Image>>,
}

impl DiskProvider {
    pub fn new(base: impl Into<PathBuf>) -> DiskProvider {
        DiskProvider { base: base.into(), cache: RefCell::new(HashMap::new()) }
    }

    pub fn for_manifest(manifest_path: &Path) -> DiskProvider {
        DiskProvider::new(manifest_dir(manifest_path))
    }
}

impl ImageProvider for DiskProvider {
    fn load(&self, key: &str) -> std::result::Result<Image, NnError> {
        if let Some(img) = self.cache.borrow().get(key) {
            return Ok(img.clone());
        }
        let img = image_io::read_image(&self.base.join(key))
            .map_err(|e| NnError::Provider { path: key.into(), detail: e.to_string() })?;
        self.cache.borrow_mut().insert(key.into(), img.clone());
        Ok(img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use signbench_core::dataset::{ClipRecord, FrameRecord, SignLabel, SplitTag};

    fn one_frame_manifest() -> Manifest {
        let mut m = Manifest::new();
        m.clips.push(ClipRecord {
            clip_id: "c0".into(),
            interpreter: "a".into(),
            capture_fps: 30,
            frames: vec![FrameRecord {
                image: "frames/f0.ppm".into(),
                label: SignLabel::from_id(0).unwrap(),
                mask: None,
                hand_boxes: vec![],
                split: SplitTag::Train,
            }],
        });
        m
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = one_frame_manifest();
        save_manifest(&path, &m).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), m);
    }

    #[test]
    fn provider_resolves_relative_to_base() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::filled(4, 4, [9, 8, 7]).unwrap();
        image_io::write_image(&dir.path().join("frames/f0.ppm"), &img).unwrap();
        let provider = DiskProvider::new(dir.path());
        assert_eq!(provider.load("frames/f0.ppm").unwrap(), img);
        // Second load comes from the cache and still matches.
        assert_eq!(provider.load("frames/f0.ppm").unwrap(), img);
    }

    #[test]
    fn provider_miss_names_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let provider = DiskProvider::new(dir.path());
        match provider.load("frames/absent.ppm").unwrap_err() {
            NnError::Provider { path, .. } => assert_eq!(path, "frames/absent.ppm"),
            other => panic!("expected Provider, got {other:?}"),
        }
    }

    #[test]
    fn manifest_dir_of_bare_filename_is_cwd() {
        assert_eq!(manifest_dir(Path::new("manifest.json")), PathBuf::from("."));
        assert_eq!(manifest_dir(Path::new("a/b/manifest.json")), PathBuf::from("a/b"));
    }
}
