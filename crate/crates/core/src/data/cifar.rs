use std::path::Path;

use super::{DataError, Dataset, Split};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const RECORD: usize = 1 + 3 * 32 * 32;

/// Loads CIFAR-10 binary batches (`data_batch_*.bin`, `test_batch.bin`).
///
/// Each record is one label byte followed by 3072 pixel bytes in
/// channel-major order. Samples come out as `[N, 3, 32, 32]` scaled to `[0, 1]`.
pub fn load_cifar10_binary<T: Scalar>(batches: &[impl AsRef<Path>]) -> Result<Dataset<T>, DataError> {
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let scale = 1.0 / 255.0;
    for path in batches {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if bytes.len() % RECORD != 0 {
            let offset = bytes.len() / RECORD * RECORD;
            return Err(DataError::Truncated {
                path: path.display().to_string(),
                offset,
                needed: RECORD - (bytes.len() - offset),
            });
        }
        for rec in bytes.chunks_exact(RECORD) {
            labels.push(rec[0] as usize);
            data.extend(rec[1..].iter().map(|p| T::of(*p as f64 / 255.0)));
        }
    }
    let n = labels.len();
    let images = Tensor::from_vec(&[n, 3, 32, 32], data).expect("whole records");
    let mut ds = Dataset::new(images, labels, 10)?.with_split(Split::Train);
    ds.scale = scale;
    Ok(ds)
}
