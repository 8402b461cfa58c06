//! `VGSF` feature matrices: `"VGSF" | version u32 | rows u32 | cols u32 |
//! f32 × rows·cols`, little-endian, row-major.

use std::path::Path;

use crate::error::{Result, VgsError};
use crate::numcore::Tensor;

pub const MAGIC: &[u8; 4] = b"VGSF";
pub const VERSION: u32 = 1;
const HEADER: usize = 16;

pub fn encode_features(rows: usize, cols: usize, values: &[f32]) -> Vec<u8> {
    assert_eq!(values.len(), rows * cols);
    let mut out = Vec::with_capacity(HEADER + values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Raw `f32` payload with its dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(
            self.rows,
            self.cols,
            self.values.iter().map(|v| f64::from(*v)).collect(),
        )
        .expect("rows and cols are positive")
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        let rows = if t.rank() == 1 { 1 } else { t.rows() };
        FeatureMatrix {
            rows,
            cols: t.len() / rows,
            values: t.data().iter().map(|v| *v as f32).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_features(self.rows, self.cols, &self.values)
    }
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    if bytes.len() < HEADER {
        return Err(VgsError::format(
            path,
            format!("truncated header: {} bytes, need {HEADER}", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(VgsError::format(path, "bad magic, expected VGSF"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(VgsError::format(
            path,
            format!("unsupported version {version}"),
        ));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    if rows == 0 || cols == 0 {
        return Err(VgsError::format(
            path,
            format!("empty matrix ({rows} rows, {cols} cols)"),
        ));
    }
    let expected = HEADER + rows * cols * 4;
    if bytes.len() != expected {
        return Err(VgsError::format(
            path,
            format!(
                "payload size mismatch: expected {expected} bytes, found {}",
                bytes.len()
            ),
        ));
    }
    let values = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(FeatureMatrix { rows, cols, values })
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = std::fs::read(path).map_err(|e| VgsError::io(path, e))?;
    decode_features(&bytes, path)
}

/// Reads a feature file promoted to `f64`.
pub fn load_features(path: &Path) -> Result<Tensor> {
    Ok(read_features(path)?.to_tensor())
}

pub fn write_features(path: &Path, m: &FeatureMatrix) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| VgsError::io(parent, e))?;
    }
    std::fs::write(path, m.to_bytes()).map_err(|e| VgsError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_three_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vgsf");
        let m = FeatureMatrix {
            rows: 2,
            cols: 3,
            values: vec![1.0, -2.5, 3.25, 0.0, 1e-3, 7.0],
        };
        write_features(&path, &m).unwrap();
        let t = load_features(&path).unwrap();
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.data(), &[1.0, -2.5, 3.25, 0.0, f64::from(1e-3f32), 7.0]);
        assert_eq!(std::fs::read(&path).unwrap().len(), 16 + 24);
    }

    #[test]
    fn truncated_payload_reports_sizes() {
        let bytes = encode_features(2, 3, &[0.0; 6]);
        let err = decode_features(&bytes[..30], Path::new("x"))
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("expected 40") && err.contains("found 30"),
            "{err}"
        );
    }

    #[test]
    fn zero_rows_rejected() {
        let bytes = encode_features(0, 3, &[]);
        assert!(decode_features(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = encode_features(1, 1, &[1.0]);
        bytes[3] = b'C';
        assert!(decode_features(&bytes, Path::new("x"))
            .unwrap_err()
            .to_string()
            .contains("magic"));
    }

    proptest! {
        #[test]
        fn bytes_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u32>()) {
            let values: Vec<f32> = (0..rows * cols)
                .map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32) & 0x7f7f_ffff))
                .collect();
            let bytes = encode_features(rows, cols, &values);
            let back = decode_features(&bytes, Path::new("p")).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
