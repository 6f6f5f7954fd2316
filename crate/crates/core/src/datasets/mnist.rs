//! MNIST in the IDX format: big-endian `u32` header fields, then raw bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;
pub const CLASSES: usize = 10;

/// Images as rows of 784 values in `[0, 1]`, labels in `0..10`.
#[derive(Clone, Debug, PartialEq)]
pub struct MnistDataset {
    pub images: Matrix,
    pub labels: Vec<usize>,
}

impl MnistDataset {
    pub fn new(images: Matrix, labels: Vec<usize>) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::CountMismatch {
                images: images.rows(),
                labels: labels.len(),
            });
        }
        if images.cols() != PIXELS {
            return Err(Error::DimensionMismatch {
                context: "MNIST image width",
                expected: PIXELS,
                found: images.cols(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= CLASSES) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: CLASSES,
            });
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// The first `count` samples.
    pub fn truncate(&self, count: usize) -> Self {
        let idx: Vec<usize> = (0..count.min(self.len())).collect();
        self.select(&idx)
    }

    /// Shuffles with `seed` and holds out the last `valid` samples.
    pub fn hold_out(&self, valid: usize, seed: u64) -> Result<(Self, Self)> {
        if valid > self.len() {
            return Err(Error::Oversubscribed {
                requested: valid,
                available: self.len(),
            });
        }
        let perm = Rng::new(seed).permutation(self.len());
        let cut = self.len() - valid;
        Ok((self.select(&perm[..cut]), self.select(&perm[cut..])))
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn header(bytes: &[u8], file: &str, magic: u32, len: usize) -> Result<Vec<u32>> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            file: file.into(),
            expected: 4 * len as u64,
            found: bytes.len() as u64,
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::BadMagic {
            file: file.into(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < 4 * len {
        return Err(Error::Truncated {
            file: file.into(),
            expected: 4 * len as u64,
            found: bytes.len() as u64,
        });
    }
    Ok((1..len).map(|i| be_u32(bytes, 4 * i)).collect())
}

fn body<'a>(bytes: &'a [u8], file: &str, offset: usize, len: usize) -> Result<&'a [u8]> {
    let expected = offset + len;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            file: file.into(),
            expected: expected as u64,
            found: bytes.len() as u64,
        });
    }
    if bytes.len() > expected {
        return Err(Error::BadHeader {
            file: file.into(),
            reason: format!("{} bytes after the declared data", bytes.len() - expected),
        });
    }
    Ok(&bytes[offset..])
}

/// Parses an IDX image file; pixels are scaled by `1/255`.
pub fn parse_idx_images(bytes: &[u8], file: &str) -> Result<Matrix> {
    let h = header(bytes, file, IMAGE_MAGIC, 4)?;
    let (count, rows, cols) = (h[0] as usize, h[1] as usize, h[2] as usize);
    if rows != SIDE || cols != SIDE {
        return Err(Error::BadHeader {
            file: file.into(),
            reason: format!("images are {rows}×{cols}, expected {SIDE}×{SIDE}"),
        });
    }
    let pixels = body(bytes, file, 16, count * PIXELS)?;
    let data = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    Matrix::from_vec(count, PIXELS, data)
}

pub fn parse_idx_labels(bytes: &[u8], file: &str) -> Result<Vec<usize>> {
    let h = header(bytes, file, LABEL_MAGIC, 2)?;
    let labels = body(bytes, file, 8, h[0] as usize)?;
    Ok(labels.iter().map(|&b| b as usize).collect())
}

pub fn load_mnist(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<MnistDataset> {
    let (ip, lp) = (images.as_ref(), labels.as_ref());
    let images = parse_idx_images(&std::fs::read(ip)?, &ip.display().to_string())?;
    let labels = parse_idx_labels(&std::fs::read(lp)?, &lp.display().to_string())?;
    MnistDataset::new(images, labels)
}

/// Writes both IDX files. Pixels are rounded back to bytes, so data read by
/// [`load_mnist`] round-trips exactly.
pub fn write_mnist(
    data: &MnistDataset,
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<()> {
    let n = data.len() as u32;
    let mut img = Vec::with_capacity(16 + data.len() * PIXELS);
    for v in [IMAGE_MAGIC, n, SIDE as u32, SIDE as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend(
        data.images
            .as_slice()
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    let mut lab = Vec::with_capacity(8 + data.len());
    for v in [LABEL_MAGIC, n] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend(data.labels.iter().map(|&l| l as u8));
    std::fs::write(images, img)?;
    std::fs::write(labels, lab)?;
    Ok(())
}
