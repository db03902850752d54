//! Raw float32 tensors with a JSON sidecar describing their shape.
//!
//! `samples.f32` holds little-endian f32 values in row-major order and
//! `samples.json` holds `{"shape": [rows, cols], "dtype": "float32", ...}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Batch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Sidecar {
    pub fn for_batch(x: &Batch) -> Self {
        Self {
            shape: vec![x.nrows(), x.ncols()],
            dtype: "float32".into(),
            byte_order: "little".into(),
            sampler: None,
            steps: None,
            seed: None,
        }
    }
}

pub fn sidecar_path(data: &Path) -> PathBuf {
    data.with_extension("json")
}

pub fn encode_f32(x: &Batch) -> Vec<u8> {
    let mut out = Vec::with_capacity(x.len() * 4);
    for v in x.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

/// Write `data` and its sidecar next to it.
pub fn write_tensor(data: &Path, x: &Batch, sidecar: &Sidecar) -> Result<()> {
    fs::write(data, encode_f32(x))?;
    let mut text = serde_json::to_string_pretty(sidecar)?;
    text.push('\n');
    fs::write(sidecar_path(data), text)?;
    Ok(())
}

pub fn read_tensor(data: &Path) -> Result<(Batch, Sidecar)> {
    let side: Sidecar = serde_json::from_slice(&fs::read(sidecar_path(data))?)?;
    if side.dtype != "float32" || side.byte_order != "little" || side.shape.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "unsupported tensor layout in sidecar of {}",
            data.display()
        )));
    }
    let bytes = fs::read(data)?;
    let (rows, cols) = (side.shape[0], side.shape[1]);
    if bytes.len() != rows * cols * 4 {
        return Err(Error::InvalidArgument(format!(
            "{}: expected {} bytes for shape {:?}, found {}",
            data.display(),
            rows * cols * 4,
            side.shape,
            bytes.len()
        )));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let x = Batch::from_shape_vec((rows, cols), vals).map_err(|e| Error::Shape(e.to_string()))?;
    Ok((x, side))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.f32");
        let x = ndarray::array![[1.5, -2.0], [0.25, 3.0], [7.0, 8.0]];
        let mut side = Sidecar::for_batch(&x);
        side.sampler = Some("ddim".into());
        write_tensor(&p, &x, &side).unwrap();
        let (y, s) = read_tensor(&p).unwrap();
        assert_eq!(x, y);
        assert_eq!(s, side);
        assert_eq!(std::fs::read(&p).unwrap().len(), 24);
    }

    #[test]
    fn size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.f32");
        let x = ndarray::array![[1.0, 2.0]];
        write_tensor(&p, &x, &Sidecar::for_batch(&x)).unwrap();
        std::fs::write(&p, [0u8; 5]).unwrap();
        assert!(read_tensor(&p).is_err());
    }
}
