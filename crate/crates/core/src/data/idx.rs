//! IDX binary format (big-endian) as used by the handwritten-digit corpus.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::{Dataset, Normalization, Split};
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn read_be_u32(bytes: &[u8], pos: usize, path: &Path) -> Result<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            position: pos,
            detail: "header truncated".into(),
        })
}

/// Parses an unsigned-byte IDX file with the given magic number.
pub fn parse_idx(bytes: &[u8], expected_magic: u32, path: &Path) -> Result<IdxArray> {
    let magic = read_be_u32(bytes, 0, path)?;
    if magic != expected_magic {
        return Err(Error::Format {
            path: path.to_path_buf(),
            position: 0,
            detail: format!("magic {magic:#010x}, expected {expected_magic:#010x}"),
        });
    }
    let ndims = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        dims.push(read_be_u32(bytes, 4 + 4 * d, path)? as usize);
    }
    let header = 4 + 4 * ndims;
    let len: usize = dims.iter().product();
    let available = bytes.len() - header.min(bytes.len());
    if available < len {
        return Err(Error::Format {
            path: path.to_path_buf(),
            position: bytes.len(),
            detail: format!("payload truncated: {available} of {len} bytes"),
        });
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..header + len].to_vec(),
    })
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    let plain = dir.join(stem);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::io(
        plain,
        std::io::Error::new(std::io::ErrorKind::NotFound, "IDX file not found (.gz also tried)"),
    ))
}

/// Loads one split of the 28x28 digit corpus from `dir`.
///
/// Expects `train-*` / `t10k-*` image and label files, optionally gzipped.
/// Pixels are scaled by 1/255, so every sign flag is `+1`.
pub fn load_digits(dir: &Path, split: Split) -> Result<Dataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let image_path = locate(dir, &format!("{prefix}-images-idx3-ubyte"))?;
    let label_path = locate(dir, &format!("{prefix}-labels-idx1-ubyte"))?;
    let images = parse_idx(&read_maybe_gz(&image_path)?, IMAGE_MAGIC, &image_path)?;
    let labels = parse_idx(&read_maybe_gz(&label_path)?, LABEL_MAGIC, &label_path)?;
    if images.dims[0] != labels.dims[0] {
        return Err(Error::Format {
            path: label_path,
            position: 4,
            detail: format!(
                "{} labels for {} images",
                labels.dims[0], images.dims[0]
            ),
        });
    }
    let n_features = images.dims[1] * images.dims[2];
    let features = images.data.iter().map(|&p| f64::from(p)).collect();
    let labels: Vec<usize> = labels.data.iter().map(|&l| usize::from(l)).collect();
    if let Some(pos) = labels.iter().position(|&l| l >= 10) {
        return Err(Error::Format {
            path: label_path,
            position: 8 + pos,
            detail: format!("label {} is not a digit", labels[pos]),
        });
    }
    let raw = Dataset::new(n_features, 10, split, features, labels)?;
    raw.normalized(&Normalization::fixed(n_features, 255.0))
}
