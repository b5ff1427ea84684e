//! Full manifest validation: the structural checks from the core plus
//! everything that needs file access (existence, decodability, mask
//! dimensions, box bounds).

use std::collections::HashMap;
use std::path::Path;

use signbench_core::dataset::{validate_structure, Manifest, Violation};

use crate::image_io;

/// Per-path decode outcome, cached so a file referenced by many frames is
/// read once. `Some` carries the decoded dimensions.
enum Decoded {
    Missing,
    Unreadable(String),
    Ok(u32, u32),
}

fn lookup<'a>(
    base: &Path,
    rel: &str,
    is_mask: bool,
    seen: &'a mut HashMap<(String, bool), Decoded>,
) -> &'a Decoded {
    seen.entry((rel.to_string(), is_mask)).or_insert_with(|| {
        let path = base.join(rel);
        if !path.exists() {
            return Decoded::Missing;
        }
        let dims = if is_mask {
            image_io::read_mask(&path).map(|m| (m.width(), m.height()))
        } else {
            image_io::read_image(&path).map(|i| (i.width(), i.height()))
        };
        match dims {
            Ok((w, h)) => Decoded::Ok(w, h),
            Err(e) => Decoded::Unreadable(e.to_string()),
        }
    })
}

/// Structural checks plus file-level ones. Violations are findings, not
/// errors; callers decide whether a nonempty list is fatal.
pub fn validate_manifest(manifest: &Manifest, base: &Path) -> Vec<Violation> {
    let mut out = validate_structure(manifest);
    let mut seen: HashMap<(String, bool), Decoded> = HashMap::new();

    for clip in &manifest.clips {
        for (fi, frame) in clip.frames.iter().enumerate() {
            let image_dims = match lookup(base, &frame.image, false, &mut seen) {
                Decoded::Missing => {
                    out.push(Violation::MissingFile { path: frame.image.clone() });
                    None
                }
                Decoded::Unreadable(detail) => {
                    out.push(Violation::UnreadableImage {
                        path: frame.image.clone(),
                        detail: detail.clone(),
                    });
                    None
                }
                Decoded::Ok(w, h) => Some((*w, *h)),
            };

            if let Some(mask_rel) = &frame.mask {
                match lookup(base, mask_rel, true, &mut seen) {
                    Decoded::Missing => {
                        out.push(Violation::MissingFile { path: mask_rel.clone() });
                    }
                    Decoded::Unreadable(detail) => {
                        out.push(Violation::UnreadableImage {
                            path: mask_rel.clone(),
                            detail: detail.clone(),
                        });
                    }
                    Decoded::Ok(mw, mh) => {
                        if let Some(image) = image_dims {
                            if (*mw, *mh) != image {
                                out.push(Violation::MaskDimensionMismatch {
                                    path: mask_rel.clone(),
                                    image,
                                    mask: (*mw, *mh),
                                });
                            }
                        }
                    }
                }
            }

            if let Some((w, h)) = image_dims {
                for (bi, b) in frame.hand_boxes.iter().enumerate() {
                    if !b.is_empty() && !b.fits_in(w, h) {
                        out.push(Violation::BoxOutsideImage {
                            clip_id: clip.clip_id.clone(),
                            frame: fi,
                            which: bi,
                        });
                    }
                }
            }
        }
    }
    out
}
