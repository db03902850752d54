//! Binary checkpoint format.
//!
//! ```text
//! "DFLB" | u32 version = 1 | u32 tensor count
//! per tensor: u32 name length | UTF-8 name | u32 ndim | ndim × u64 dims | f32 data (row-major)
//! ```
//! All integers and floats are little-endian. Weights are stored as
//! `[fan_in, fan_out]`, biases as `[fan_out]`.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::model::{DenoiserModel, Param};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DFLB";
pub const VERSION: u32 = 1;

pub fn to_bytes(model: &DenoiserModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        let dims: Vec<u64> = if p.is_bias {
            vec![p.value.ncols() as u64]
        } else {
            vec![p.value.nrows() as u64, p.value.ncols() as u64]
        };
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in p.value.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Checkpoint {
            offset: self.pos,
            msg: msg.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return self.err(format!(
                "truncated while reading {what} ({n} bytes needed, {} left)",
                self.buf.len() - self.pos
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<DenoiserModel> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        r.pos = 0;
        return r.err("bad magic (expected \"DFLB\")");
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: VERSION,
        });
    }
    let count = r.u32("tensor count")? as usize;
    let mut params = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let at = r.pos;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Checkpoint {
                offset: at,
                msg: "tensor name is not UTF-8".into(),
            })?
            .to_owned();
        let ndim = r.u32("ndim")?;
        let dims_at = r.pos;
        let dims: Vec<u64> = (0..ndim).map(|_| r.u64("dims")).collect::<Result<_>>()?;
        let (rows, cols, is_bias) = match dims.as_slice() {
            [n] => (1, *n as usize, true),
            [a, b] => (*a as usize, *b as usize, false),
            _ => {
                r.pos = dims_at;
                return r.err(format!("tensor `{name}` has unsupported rank {ndim}"));
            }
        };
        let n = rows.checked_mul(cols).and_then(|n| n.checked_mul(4));
        let Some(nbytes) = n else {
            return r.err(format!("tensor `{name}` is too large"));
        };
        let data = r.take(nbytes, &format!("data of `{name}`"))?;
        let vals: Vec<f64> = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        params.push(Param {
            name,
            value: Array2::from_shape_vec((rows, cols), vals).expect("length checked"),
            is_bias,
        });
    }
    if r.pos != buf.len() {
        return r.err(format!("{} trailing bytes", buf.len() - r.pos));
    }
    DenoiserModel::from_params(params).map_err(|e| Error::Checkpoint {
        offset: buf.len(),
        msg: e.to_string(),
    })
}

pub fn save_checkpoint(model: &DenoiserModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<DenoiserModel> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::ModelConfig;

    fn model() -> DenoiserModel {
        let cfg = ModelConfig {
            hidden_dims: vec![6, 5],
            time_embed_dim: 4,
        };
        DenoiserModel::new(3, &cfg, 12).unwrap()
    }

    #[test]
    fn header_layout() {
        let b = to_bytes(&model());
        assert_eq!(&b[..4], b"DFLB");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 8);
        let name_len = u32::from_le_bytes(b[12..16].try_into().unwrap()) as usize;
        assert_eq!(&b[16..16 + name_len], b"hidden.0.weight");
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        assert_eq!(from_bytes(&to_bytes(&m)).unwrap(), m);
    }

    #[test]
    fn truncation_reports_offset() {
        let b = to_bytes(&model());
        for cut in [0, 3, 10, 20, b.len() - 1] {
            match from_bytes(&b[..cut]) {
                Err(Error::Checkpoint { offset, .. }) => assert!(offset <= cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn version_and_magic() {
        let mut b = to_bytes(&model());
        b[4] = 2;
        assert!(matches!(
            from_bytes(&b),
            Err(Error::UnsupportedVersion { found: 2, expected: 1 })
        ));
        let mut b = to_bytes(&model());
        b[0] = b'X';
        assert!(matches!(from_bytes(&b), Err(Error::Checkpoint { offset: 0, .. })));
        let mut b = to_bytes(&model());
        b.push(0);
        assert!(from_bytes(&b).is_err());
    }
}
