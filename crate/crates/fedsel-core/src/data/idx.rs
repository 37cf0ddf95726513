//! Loader for IDX-format image/label files (the MNIST container format),
//! so small real-data subsets can stand in for the synthetic generator.

use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], off: usize, what: &str) -> Result<u32> {
    let end = off + 4;
    if bytes.len() < end {
        return Err(Error::config(format!("{what}: file truncated at byte {off}")));
    }
    Ok(u32::from_be_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]))
}

/// Pixels scaled to [0,1], row-major per image.
fn parse_images(bytes: &[u8]) -> Result<(Vec<f64>, usize, usize)> {
    let magic = read_u32(bytes, 0, "image file")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::config(format!(
            "image file magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let count = read_u32(bytes, 4, "image file")? as usize;
    let rows = read_u32(bytes, 8, "image file")? as usize;
    let cols = read_u32(bytes, 12, "image file")? as usize;
    let dims = rows * cols;
    let expected = 16 + count * dims;
    if bytes.len() != expected {
        return Err(Error::config(format!(
            "image file holds {} bytes, expected {expected} for {count} images of {rows}×{cols}",
            bytes.len()
        )));
    }
    let features = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    Ok((features, count, dims))
}

fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0, "label file")?;
    if magic != LABEL_MAGIC {
        return Err(Error::config(format!(
            "label file magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let count = read_u32(bytes, 4, "label file")? as usize;
    if bytes.len() != 8 + count {
        return Err(Error::config(format!(
            "label file holds {} bytes, expected {} for {count} labels",
            bytes.len(),
            8 + count
        )));
    }
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

/// Load a paired IDX image/label file set into a [`Dataset`].
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let (features, count, dims) = parse_images(&fs::read(images)?)?;
    let labels = parse_labels(&fs::read(labels)?)?;
    if labels.len() != count {
        return Err(Error::config(format!(
            "{count} images but {} labels",
            labels.len()
        )));
    }
    if count == 0 {
        return Err(Error::config("IDX files contain no samples"));
    }
    let class_count = labels.iter().max().unwrap() + 1;
    Dataset::new(features, labels, dims, class_count)
}
