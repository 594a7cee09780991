//! Big-endian IDX files as used by MNIST.
//!
//! Header: two zero bytes, a type byte (0x08 = unsigned byte), the dimension
//! count, then one big-endian `u32` per dimension. Images are rank 3
//! (count x rows x cols), labels rank 1.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::ContaminatedDataset;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

fn fmt(path: &Path, field: &'static str, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        field,
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path, field: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| fmt(path, field, format!("truncated file: {} bytes", bytes.len())))
}

/// Pixels scaled by 1/255 into `[0, 1]`, one row per image.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Array2<f32>> {
    let magic = be_u32(bytes, 0, path, "magic")?;
    if magic != IMAGE_MAGIC {
        return Err(fmt(path, "magic", format!("expected {IMAGE_MAGIC}, found {magic}")));
    }
    let count = be_u32(bytes, 4, path, "count")? as usize;
    let rows = be_u32(bytes, 8, path, "rows")? as usize;
    let cols = be_u32(bytes, 12, path, "cols")? as usize;
    let dim = rows * cols;
    let body = &bytes[16..];
    if body.len() != count * dim {
        return Err(fmt(
            path,
            "pixels",
            format!(
                "header declares {count} images of {rows}x{cols} ({} bytes), body has {}",
                count * dim,
                body.len()
            ),
        ));
    }
    let pixels = body.iter().map(|&b| f32::from(b) / 255.0).collect();
    Ok(Array2::from_shape_vec((count, dim), pixels).expect("size checked"))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path, "magic")?;
    if magic != LABEL_MAGIC {
        return Err(fmt(path, "magic", format!("expected {LABEL_MAGIC}, found {magic}")));
    }
    let count = be_u32(bytes, 4, path, "count")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(fmt(
            path,
            "labels",
            format!("header declares {count} labels, body has {}", body.len()),
        ));
    }
    Ok(body.to_vec())
}

/// Reads an image file and its label file; counts must agree.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<(Array2<f32>, Vec<u8>)> {
    let img = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lbl = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let features = parse_idx_images(&img, images_path)?;
    let labels = parse_idx_labels(&lbl, labels_path)?;
    if features.nrows() != labels.len() {
        return Err(fmt(
            labels_path,
            "count",
            format!(
                "{} labels but {} images in {}",
                labels.len(),
                features.nrows(),
                images_path.display()
            ),
        ));
    }
    Ok((features, labels))
}

/// A clean dataset with `num_classes = max label + 1`.
pub fn load_idx_dataset(images_path: &Path, labels_path: &Path) -> Result<ContaminatedDataset> {
    let (features, labels) = load_idx(images_path, labels_path)?;
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let k = labels.iter().max().map_or(1, |m| m + 1);
    ContaminatedDataset::clean(features, labels, k)
}

/// Inverse of [`parse_idx_images`]; values are rounded back to bytes.
pub fn write_idx_images(features: &Array2<f32>, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if rows * cols != features.ncols() {
        return Err(Error::invalid(format!(
            "{rows}x{cols} images do not match {} features",
            features.ncols()
        )));
    }
    let mut out = Vec::with_capacity(16 + features.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(features.nrows() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend(
        features
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    Ok(out)
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
