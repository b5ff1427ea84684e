//! PPM/PGM files on disk. Color images travel as binary PPM (P6), masks and
//! heatmaps as binary PGM (P5), both maxval 255.

use std::fs;
use std::path::Path;

use signbench_core::image::{decode_pgm, decode_ppm, encode_pgm, encode_ppm, Mask};
use signbench_core::Image;

use crate::error::{io_at, BenchError, Result};

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    decode_ppm(&bytes)
        .map_err(|e| BenchError::Format { path: path.to_path_buf(), detail: e.to_string() })
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_at(parent))?;
    }
    fs::write(path, encode_ppm(img)).map_err(io_at(path))
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    decode_pgm(&bytes)
        .map_err(|e| BenchError::Format { path: path.to_path_buf(), detail: e.to_string() })
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_at(parent))?;
    }
    fs::write(path, encode_pgm(mask)).map_err(io_at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_roundtrip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/probe.ppm");
        let img = Image::new(3, 2, vec![7; 18]).unwrap();
        write_image(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }

    #[test]
    fn missing_file_reports_the_path() {
        let err = read_image(Path::new("/nonexistent/x.ppm")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.ppm"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn garbage_bytes_are_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ppm");
        fs::write(&path, b"P9 nonsense").unwrap();
        match read_image(&path).unwrap_err() {
            BenchError::Format { .. } => {}
            other => panic!("expected Format, got {other:?}"),
        }
    }
}
