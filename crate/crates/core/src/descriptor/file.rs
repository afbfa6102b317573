//! Descriptor file layout (all little-endian):
//!
//! | bytes        | content                               |
//! |--------------|---------------------------------------|
//! | 0..12        | magic `RESVPR-DESC\0`                 |
//! | 12..16       | format version, u32                   |
//! | 16..24       | frame count `T`, u64                  |
//! | 24..32       | descriptor dimension `D`, u64         |
//! | 32..         | `T * D` f32 values, row-major         |

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::DescriptorSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DESCRIPTOR_MAGIC: &[u8; 12] = b"RESVPR-DESC\0";
pub const DESCRIPTOR_VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "descriptor",
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads a descriptor file, optionally checking its dimension and frame count.
pub fn read_descriptors<T: Scalar>(
    path: &Path,
    expected_dim: Option<usize>,
    expected_rows: Option<usize>,
) -> Result<DescriptorSet<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(format_err(path, "truncated header"));
    }
    if &bytes[..12] != DESCRIPTOR_MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    if version != DESCRIPTOR_VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let dim = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(Error::DimensionMismatch {
                what: "descriptor dimension",
                expected,
                got: dim,
            });
        }
    }
    if let Some(expected) = expected_rows {
        if expected != rows {
            return Err(Error::DimensionMismatch {
                what: "descriptor frame count",
                expected,
                got: rows,
            });
        }
    }
    let payload = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| format_err(path, "header sizes overflow"))?;
    if bytes.len() != HEADER_LEN + payload {
        return Err(format_err(
            path,
            format!("expected {} payload bytes, found {}", payload, bytes.len() - HEADER_LEN),
        ));
    }
    let values: Vec<T> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    let descriptors = Array2::from_shape_vec((rows, dim), values).expect("shape checked above");
    DescriptorSet::new(descriptors)
}

/// Writes descriptors as f32; values are rounded to single precision.
pub fn write_descriptors<T: Scalar>(path: &Path, set: &DescriptorSet<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + set.descriptors.len() * 4);
    buf.extend_from_slice(DESCRIPTOR_MAGIC);
    buf.extend_from_slice(&DESCRIPTOR_VERSION.to_le_bytes());
    buf.extend_from_slice(&(set.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(set.dim() as u64).to_le_bytes());
    for v in set.descriptors.iter() {
        buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn raw_file(rows: u64, dim: u64, values: &[f32]) -> Vec<u8> {
        let mut b = DESCRIPTOR_MAGIC.to_vec();
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&rows.to_le_bytes());
        b.extend_from_slice(&dim.to_le_bytes());
        for v in values {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn reads_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let vals: Vec<f32> = (0..12).map(|i| i as f32 * 0.5 - 2.0).collect();
        fs::write(&path, raw_file(3, 4, &vals)).unwrap();
        let set = read_descriptors::<f64>(&path, Some(4), Some(3)).unwrap();
        assert_eq!(set.descriptors.dim(), (3, 4));
        assert_eq!(set.descriptors[(2, 3)], 3.5);
        assert_eq!(set.descriptors[(0, 0)], -2.0);
        assert_eq!(set.frame_ids, vec![0, 1, 2]);
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        fs::write(&path, raw_file(1, 4096, &vec![0.0; 4096])).unwrap();
        assert!(matches!(
            read_descriptors::<f64>(&path, Some(512), None),
            Err(Error::DimensionMismatch {
                expected: 512,
                got: 4096,
                ..
            })
        ));
        fs::write(&path, raw_file(2, 2, &[1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(
            read_descriptors::<f64>(&path, None, None),
            Err(Error::Format { .. })
        ));
        let mut bad = raw_file(1, 1, &[1.0]);
        bad[0] = b'X';
        fs::write(&path, bad).unwrap();
        assert!(matches!(
            read_descriptors::<f64>(&path, None, None),
            Err(Error::Format { .. })
        ));
        fs::write(&path, raw_file(1, 2, &[1.0, f32::NAN])).unwrap();
        assert!(matches!(
            read_descriptors::<f64>(&path, None, None),
            Err(Error::NonFinite(_))
        ));
        fs::write(&path, &b"RESVPR"[..]).unwrap();
        assert!(read_descriptors::<f64>(&path, None, None).is_err());
    }

    #[test]
    fn f64_values_round_to_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let set = DescriptorSet::new(array![[0.1f64, 1.0 / 3.0]]).unwrap();
        write_descriptors(&path, &set).unwrap();
        let back = read_descriptors::<f64>(&path, None, None).unwrap();
        assert_eq!(back.descriptors[(0, 0)], 0.1f32 as f64);
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(rows in 1usize..8, dim in 1usize..9, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data = Array2::from_shape_simple_fn((rows, dim), || rng.random_range(-1e6f32..1e6));
            let set = DescriptorSet::new(data.clone()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("r.bin");
            write_descriptors(&path, &set).unwrap();
            let back = read_descriptors::<f32>(&path, Some(dim), Some(rows)).unwrap();
            for (a, b) in back.descriptors.iter().zip(data.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
