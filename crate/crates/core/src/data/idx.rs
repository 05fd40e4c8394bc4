use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::{DataError, Dataset, Split};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

/// Reads a file, transparently inflating gzip content.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let io = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let raw = std::fs::read(path).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DataError::Truncated {
            path: path.to_string(),
            offset: bytes.len(),
            needed: offset + 4,
        })
}

fn payload<'a>(bytes: &'a [u8], start: usize, len: usize, path: &str) -> Result<&'a [u8], DataError> {
    if bytes.len() < start + len {
        return Err(DataError::Truncated {
            path: path.to_string(),
            offset: bytes.len(),
            needed: start + len,
        });
    }
    if bytes.len() > start + len {
        return Err(DataError::TrailingBytes {
            path: path.to_string(),
            extra: bytes.len() - start - len,
        });
    }
    Ok(&bytes[start..])
}

/// Parses an IDX3 image file: returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &str) -> Result<(usize, usize, usize, Vec<u8>), DataError> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::WrongMagic {
            path: path.to_string(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let px = payload(bytes, 16, n * rows * cols, path)?;
    Ok((n, rows, cols, px.to_vec()))
}

/// Parses an IDX1 label file.
pub fn parse_idx_labels(bytes: &[u8], path: &str) -> Result<Vec<u8>, DataError> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::WrongMagic {
            path: path.to_string(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    Ok(payload(bytes, 8, n, path)?.to_vec())
}

/// Loads an MNIST-style image/label file pair (optionally gzip-compressed).
/// Pixels are scaled to `[0, 1]`; images keep their `N × rows × cols` shape.
pub fn load_idx<T: Scalar>(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<Dataset<T>, DataError> {
    let (ip, lp) = (images.as_ref(), labels.as_ref());
    let (n, rows, cols, px) = parse_idx_images(&read_maybe_gz(ip)?, &ip.display().to_string())?;
    let lab = parse_idx_labels(&read_maybe_gz(lp)?, &lp.display().to_string())?;
    if lab.len() != n {
        return Err(DataError::CountMismatch {
            images: n,
            labels: lab.len(),
        });
    }
    let scale = 1.0 / 255.0;
    let data = px.iter().map(|p| T::of(*p as f64 / 255.0)).collect();
    let tensor = Tensor::from_vec(&[n, rows, cols], data).expect("size checked by parser");
    let labels: Vec<usize> = lab.iter().map(|l| *l as usize).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    let mut ds = Dataset::new(tensor, labels, classes)?.with_split(Split::Train);
    ds.scale = scale;
    Ok(ds)
}
