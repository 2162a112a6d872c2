//! IDX binary tensors (the MNIST distribution format).
//!
//! ```text
//! bytes 0-1   0x00 0x00
//! byte  2     type code, 0x08 = unsigned byte (the only one supported)
//! byte  3     number of dimensions D
//! next 4*D    big-endian u32 size of each dimension
//! rest        payload, row-major, exactly prod(sizes) bytes
//! ```

use super::{DataError, Dataset, Targets};
use ndarray::Array2;
use std::path::Path;

const UBYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    /// Serializes back to IDX bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&[0, 0, UBYTE, self.dims.len() as u8]);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor, DataError> {
    if bytes.len() < 4 {
        return Err(DataError::TruncatedHeader {
            needed: 4,
            actual: bytes.len(),
        });
    }
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic[0] != 0 || magic[1] != 0 || magic[2] != UBYTE {
        return Err(DataError::BadMagic(magic));
    }
    let rank = magic[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(DataError::TruncatedHeader {
            needed: header,
            actual: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(DataError::EmptyDimension(i));
    }
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .unwrap_or(usize::MAX);
    let actual = bytes.len() - header;
    if actual != expected {
        return Err(DataError::TruncatedPayload { expected, actual });
    }
    Ok(IdxTensor {
        dims,
        data: bytes[header..].to_vec(),
    })
}

/// Builds a classification dataset from raw IDX image and label bytes.
///
/// Pixels are flattened per image and divided by 255.
pub fn mnist_from_bytes(images: &[u8], labels: &[u8]) -> Result<Dataset, DataError> {
    let images = parse_idx(images)?;
    let labels = parse_idx(labels)?;
    if images.dims.len() != 3 {
        return Err(DataError::UnexpectedRank {
            expected: 3,
            actual: images.dims.len(),
        });
    }
    if labels.dims.len() != 1 {
        return Err(DataError::UnexpectedRank {
            expected: 1,
            actual: labels.dims.len(),
        });
    }
    let n = images.dims[0];
    if n != labels.dims[0] {
        return Err(DataError::CountMismatch {
            images: n,
            labels: labels.dims[0],
        });
    }
    let width = images.dims[1] * images.dims[2];
    let pixels = images.data.iter().map(|&p| f64::from(p) / 255.0).collect();
    let features = Array2::from_shape_vec((n, width), pixels).expect("payload size checked");
    let labels: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    Dataset::new(features, Targets::Class { labels, n_classes }, None)
}

pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let read = |p: &Path| {
        std::fs::read(p).map_err(|source| DataError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    mnist_from_bytes(&read(images_path)?, &read(labels_path)?)
}
