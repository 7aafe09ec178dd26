//! IDX files as distributed for MNIST: a big-endian `u32` magic
//! (`0x00000803` for `u8` images, `0x00000801` for `u8` labels), big-endian
//! `u32` dimensions, then raw bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const MAX_LABEL: u8 = 9;

#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// One row-major image per entry, scaled to `[0, 1]`.
    pub pixels: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdxData {
    pub images: IdxImages,
    pub labels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let chunk = bytes.get(offset..offset + 4).ok_or_else(|| Error::Format {
        offset: offset as u64,
        message: format!("truncated while reading {what}"),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = read_u32(bytes, 0, "magic number")?;
    if magic != expected {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic number 0x{magic:08x}, expected 0x{expected:08x}"),
        });
    }
    Ok(())
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4, "image count")? as usize;
    let rows = read_u32(bytes, 8, "row count")? as usize;
    let cols = read_u32(bytes, 12, "column count")? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    let needed = count * size;
    if body.len() < needed {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            message: format!(
                "truncated image data: header declares {count} images of {rows}x{cols} ({needed} bytes), found {}",
                body.len()
            ),
        });
    }
    if body.len() > needed {
        return Err(Error::Format {
            offset: (16 + needed) as u64,
            message: format!("{} trailing bytes after image data", body.len() - needed),
        });
    }
    let pixels = if size == 0 {
        vec![Vec::new(); count]
    } else {
        body.chunks_exact(size)
            .map(|img| img.iter().map(|&p| f64::from(p) / 255.0).collect())
            .collect()
    };
    Ok(IdxImages { rows, cols, pixels })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = read_u32(bytes, 4, "label count")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            message: format!("truncated label data: header declares {count}, found {}", body.len()),
        });
    }
    if body.len() > count {
        return Err(Error::Format {
            offset: (8 + count) as u64,
            message: format!("{} trailing bytes after label data", body.len() - count),
        });
    }
    if let Some(pos) = body.iter().position(|&l| l > MAX_LABEL) {
        return Err(Error::Format {
            offset: (8 + pos) as u64,
            message: format!("label {} outside 0..={MAX_LABEL}", body[pos]),
        });
    }
    Ok(body.to_vec())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads an image file and its label file and checks the counts agree.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<IdxData> {
    let images = parse_images(&read_file(images_path)?).map_err(|e| in_file(e, images_path))?;
    let labels = parse_labels(&read_file(labels_path)?).map_err(|e| in_file(e, labels_path))?;
    if images.pixels.len() != labels.len() {
        return Err(Error::Format {
            offset: 4,
            message: format!(
                "{} images but {} labels",
                images.pixels.len(),
                labels.len()
            ),
        });
    }
    Ok(IdxData { images, labels })
}

fn in_file(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

/// Encodes `u8` images (row-major, `rows·cols` bytes each).
pub fn encode_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        assert_eq!(img.len(), rows * cols, "image size");
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_empty_dataset() {
        let imgs = parse_images(&encode_images(28, 28, &[])).unwrap();
        assert!(imgs.pixels.is_empty());
        assert_eq!((imgs.rows, imgs.cols), (28, 28));
        assert!(parse_labels(&encode_labels(&[])).unwrap().is_empty());
    }

    #[test]
    fn pixels_are_scaled() {
        let imgs = parse_images(&encode_images(1, 3, &[vec![0, 51, 255]])).unwrap();
        assert_eq!(imgs.pixels, vec![vec![0.0, 0.2, 1.0]]);
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let mut bytes = encode_images(2, 2, &[vec![1, 2, 3, 4]]);
        bytes[3] = 0x01;
        match parse_images(&bytes) {
            Err(Error::Format { offset: 0, message }) => assert!(message.contains("magic")),
            other => panic!("{other:?}"),
        }
        // a label file is not an image file
        assert!(parse_images(&encode_labels(&[1, 2])).is_err());
    }

    #[test]
    fn truncation_is_positioned() {
        let bytes = encode_images(2, 2, &[vec![1, 2, 3, 4], vec![5, 6, 7, 8]]);
        match parse_images(&bytes[..bytes.len() - 3]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, bytes.len() as u64 - 3),
            other => panic!("{other:?}"),
        }
        match parse_images(&bytes[..10]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("{other:?}"),
        }
        assert!(parse_labels(&encode_labels(&[1, 2, 3])[..9]).is_err());
    }

    #[test]
    fn out_of_range_label() {
        match parse_labels(&encode_labels(&[3, 9, 10, 1])) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn count_mismatch_between_files() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        fs::write(&ip, encode_images(1, 1, &[vec![1], vec![2]])).unwrap();
        fs::write(&lp, encode_labels(&[1])).unwrap();
        assert!(load_idx(&ip, &lp).is_err());
        fs::write(&lp, encode_labels(&[1, 7])).unwrap();
        let data = load_idx(&ip, &lp).unwrap();
        assert_eq!(data.labels, vec![1, 7]);
    }
}
