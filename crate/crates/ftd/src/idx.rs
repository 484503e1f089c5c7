//! IDX containers (the MNIST file layout): a big-endian magic whose low byte
//! is the rank, one big-endian `u32` per dimension, then unsigned bytes.

use std::path::Path;

use ftd_core::data::{RealDataset, Split};
use ftd_core::models::InputShape;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn header(bytes: &[u8], magic: u32, what: &str) -> Result<Vec<usize>> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
    };
    let found = word(0)?;
    if found != magic {
        return Err(Error::Format(format!("{what}: bad magic {found:#010x}, expected {magic:#010x}")));
    }
    let rank = (magic & 0xff) as usize;
    (1..=rank).map(|i| word(i).map(|d| d as usize)).collect()
}

fn payload<'a>(bytes: &'a [u8], dims: &[usize], what: &str) -> Result<&'a [u8]> {
    let start = 4 * (dims.len() + 1);
    let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    let len = len.ok_or_else(|| Error::Format(format!("{what}: dimensions overflow")))?;
    let body = &bytes[start.min(bytes.len())..];
    if body.len() < len {
        return Err(Error::Format(format!("{what}: truncated payload, {} of {len} bytes", body.len())));
    }
    if body.len() > len {
        return Err(Error::Format(format!("{what}: {} trailing bytes", body.len() - len)));
    }
    Ok(body)
}

/// Decodes an image file into `(count, rows, cols, bytes)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let dims = header(bytes, IMAGES_MAGIC, "images")?;
    let data = payload(bytes, &dims, "images")?;
    Ok((dims[0], dims[1], dims[2], data))
}

pub fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    let dims = header(bytes, LABELS_MAGIC, "labels")?;
    payload(bytes, &dims, "labels")
}

/// Pairs an image and a label buffer. Pixels are scaled to `[0, 1]`.
pub fn decode_split(images: &[u8], labels: &[u8]) -> Result<(Split, InputShape)> {
    let (count, rows, cols, data) = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if labels.len() != count {
        return Err(Error::Format(format!("{count} images but {} labels", labels.len())));
    }
    let pixels = data.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels = labels.iter().map(|&l| l as usize).collect();
    Ok((Split::new(pixels, labels), InputShape::new(1, rows, cols)))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<(Split, InputShape)> {
    decode_split(&read(images)?, &read(labels)?)
}

/// Loads train and test pairs and normalises with train statistics.
pub fn load_idx_dataset(
    train: (&Path, &Path),
    test: (&Path, &Path),
    classes: usize,
) -> Result<RealDataset> {
    let (train, shape) = load_idx(train.0, train.1)?;
    let (test, test_shape) = load_idx(test.0, test.1)?;
    if shape != test_shape {
        return Err(Error::Format(format!("train images are {shape:?}, test images {test_shape:?}")));
    }
    Ok(RealDataset::from_raw(train, test, classes, shape)?)
}
