//! IDX files (the MNIST layout): big-endian `u32` magic, big-endian `u32`
//! dimensions, then unsigned bytes.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::net::Dataset;

pub const IDX_IMAGES: u32 = 0x0000_0803;
pub const IDX_LABELS: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("truncated payload: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("empty dataset")]
    Empty,
}

fn header(bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>, IdxError> {
    let need = 4 * (dims + 1);
    if bytes.len() < 4 {
        return Err(IdxError::Truncated {
            need,
            have: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let found = word(0);
    if found != magic {
        return Err(IdxError::BadMagic {
            found,
            expected: magic,
        });
    }
    if bytes.len() < need {
        return Err(IdxError::Truncated {
            need,
            have: bytes.len(),
        });
    }
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

fn payload(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8], IdxError> {
    let need = offset + len;
    bytes.get(offset..need).ok_or(IdxError::Truncated {
        need,
        have: bytes.len(),
    })
}

/// Decodes an image file and a label file already in memory. Pixels are
/// scaled to `[0, 1]`; labels are shifted to start at 1.
pub fn decode_idx(images: &[u8], labels: &[u8]) -> Result<Dataset, IdxError> {
    let dims = header(images, IDX_IMAGES, 3)?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    let ldims = header(labels, IDX_LABELS, 1)?;
    if ldims[0] != n {
        return Err(IdxError::CountMismatch {
            images: n,
            labels: ldims[0],
        });
    }
    if n == 0 || h == 0 || w == 0 {
        return Err(IdxError::Empty);
    }
    let pixels = payload(images, 16, n * h * w)?;
    let ys = payload(labels, 8, n)?;
    let classes = *ys.iter().max().expect("non-empty") as usize + 1;
    let inputs = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels = ys.iter().map(|&y| y as usize + 1).collect();
    Ok(Dataset::new(inputs, vec![1, h, w], labels, classes).expect("consistent sizes"))
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, IdxError> {
    let read = |p: &Path| {
        fs::read(p).map_err(|source| IdxError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    decode_idx(&read(images_path)?, &read(labels_path)?)
}
