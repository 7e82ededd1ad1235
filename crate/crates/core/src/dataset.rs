//! MNIST IDX parsing, normal/novel class splits and the train/validation split.
//!
//! IDX layout (all integers big-endian `u32`):
//!
//! | field        | images       | labels       |
//! |--------------|--------------|--------------|
//! | magic        | `0x00000803` | `0x00000801` |
//! | dimensions   | items, rows, cols | items   |
//! | payload      | `u8` pixels, row-major per image | one `u8` per item |

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Length {
            expected: offset + 4,
            actual: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::Format(format!(
            "bad IDX magic: expected {expected:#010x}, found {found:#010x}"
        )));
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, payload: usize) -> Result<()> {
    let expected = header + payload;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}

/// Parses an IDX image file into `[count, 1, rows, cols]` raw byte values.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = read_be_u32(bytes, 4)? as usize;
    let rows = read_be_u32(bytes, 8)? as usize;
    let cols = read_be_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Format(format!("empty image geometry {rows}x{cols}")));
    }
    check_payload(bytes, 16, count * rows * cols)?;
    let data = bytes[16..].iter().map(|&b| f64::from(b)).collect();
    Tensor::new(vec![count, 1, rows, cols], data)
}

/// Parses an IDX label file; every label must be a digit.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = read_be_u32(bytes, 4)? as usize;
    check_payload(bytes, 8, count)?;
    let labels = bytes[8..].to_vec();
    if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(Error::Data(format!("label {bad} at item {i} is not a digit")));
    }
    Ok(labels)
}

/// Encodes `[count, 1, rows, cols]` byte-valued images as IDX.
pub fn encode_idx_images(images: &Tensor) -> Result<Vec<u8>> {
    let &[count, 1, rows, cols] = images.shape() else {
        return Err(Error::Contract(format!(
            "expected [count, 1, rows, cols], got {:?}",
            images.shape()
        )));
    };
    let mut out = Vec::with_capacity(16 + images.numel());
    for v in [IMAGE_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for &v in images.data() {
        if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
            return Err(Error::Data(format!("pixel {v} is not a byte value")));
        }
        out.push(v as u8);
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Scales byte pixel values into `[0, 1]`.
pub fn normalize_pixels(raw: &Tensor) -> Tensor {
    raw.map(|v| v / 255.0)
}

/// Images with one digit label each.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImageSet {
    images: Tensor,
    labels: Vec<u8>,
}

impl LabeledImageSet {
    /// `images` is `[count, channels, rows, cols]` with pixels in `[0, 1]`.
    pub fn new(images: Tensor, labels: Vec<u8>) -> Result<Self> {
        if images.ndim() != 4 {
            return Err(Error::Dimension {
                op: "LabeledImageSet",
                axis: "rank",
                expected: 4,
                found: images.ndim(),
            });
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::Dimension {
                op: "LabeledImageSet",
                axis: "count",
                expected: images.shape()[0],
                found: labels.len(),
            });
        }
        if let Some(v) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("pixel value {v} outside [0, 1]")));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::Data(format!("label {l} is not a digit")));
        }
        Ok(Self { images, labels })
    }

    /// Reads an IDX image/label file pair and normalizes the pixels.
    pub fn read_idx(images: &Path, labels: &Path) -> Result<Self> {
        let image_bytes = std::fs::read(images).map_err(|e| Error::io(images, e))?;
        let label_bytes = std::fs::read(labels).map_err(|e| Error::io(labels, e))?;
        let raw = parse_idx_images(&image_bytes)?;
        Self::new(normalize_pixels(&raw), parse_idx_labels(&label_bytes)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// `[channels, rows, cols]` of one image.
    pub fn image_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// A single image as a `[1, channels, rows, cols]` batch.
    pub fn image(&self, index: usize) -> Result<Tensor> {
        self.images.slice_batch(index, 1)
    }

    /// Items at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let labels = indices
            .iter()
            .map(|&i| {
                self.labels
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::Contract(format!("index {i} outside 0..{}", self.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        let images = if indices.is_empty() {
            let mut shape = self.images.shape().to_vec();
            shape[0] = 0;
            Tensor::new(shape, Vec::new())?
        } else {
            self.images.gather_batch(indices)?
        };
        Ok(Self { images, labels })
    }
}

/// Class and size configuration for the experiment splits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitConfig {
    pub normal_classes: BTreeSet<u8>,
    pub novel_classes: BTreeSet<u8>,
    pub train_count: usize,
    pub val_count: usize,
    pub shuffle_seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            normal_classes: (0..=4).collect(),
            novel_classes: (5..=9).collect(),
            train_count: 54_000,
            val_count: 6_000,
            shuffle_seed: 0,
        }
    }
}

impl SplitConfig {
    /// Checks that the class sets are disjoint digit sets.
    pub fn validate_classes(&self) -> Result<()> {
        if let Some(d) = self.normal_classes.iter().chain(&self.novel_classes).find(|&&d| d > 9) {
            return Err(Error::Config(format!("class {d} is not a digit")));
        }
        if let Some(d) = self.normal_classes.intersection(&self.novel_classes).next() {
            return Err(Error::Config(format!(
                "digit {d} is listed as both normal and novel"
            )));
        }
        if self.normal_classes.is_empty() {
            return Err(Error::Config("no normal classes".into()));
        }
        Ok(())
    }
}

/// Order-preserving filter into (normal, novel) subsets; images whose label
/// is in neither class set are dropped.
pub fn split_by_novelty(
    data: &LabeledImageSet,
    config: &SplitConfig,
) -> Result<(LabeledImageSet, LabeledImageSet)> {
    config.validate_classes()?;
    let pick = |classes: &BTreeSet<u8>| -> Vec<usize> {
        (0..data.len())
            .filter(|&i| classes.contains(&data.labels[i]))
            .collect()
    };
    Ok((
        data.subset(&pick(&config.normal_classes))?,
        data.subset(&pick(&config.novel_classes))?,
    ))
}

/// Seeded shuffle, then the first `train_count` items go to training and the
/// rest to validation.
pub fn train_val_split(
    data: &LabeledImageSet,
    config: &SplitConfig,
) -> Result<(LabeledImageSet, LabeledImageSet)> {
    if config.train_count + config.val_count != data.len() {
        return Err(Error::Config(format!(
            "train_count {} + val_count {} != {} available images",
            config.train_count,
            config.val_count,
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.shuffle_seed));
    let (train, val) = order.split_at(config.train_count);
    Ok((data.subset(train)?, data.subset(val)?))
}
