//! Binary tensor archives.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "VGSC" | version u32 | count u32
//! count × { name_len u32 | name bytes | rank u32 | dims u64 × rank | f64 × Π dims }
//! json_len u64 | json bytes
//! ```
//!
//! Model checkpoints store every parameter followed by the `ModelConfig` as
//! JSON. Optimizer state files reuse the container with their own JSON.

use std::path::Path;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Result, VgsError};
use crate::numcore::{ParamSet, Parameter, Tensor};

pub const MAGIC: &[u8; 4] = b"VGSC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub tensors: Vec<(String, Tensor)>,
    pub json: String,
}

impl Archive {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for d in t.shape() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.json.len() as u64).to_le_bytes());
        out.extend_from_slice(self.json.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            path,
        };
        if r.take(4)? != MAGIC {
            return Err(VgsError::format(path, "bad magic, expected VGSC"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(VgsError::format(
                path,
                format!("unsupported version {version}"),
            ));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| VgsError::format(path, "tensor name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            let dims = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |acc, d| acc.checked_mul(*d))
                .ok_or_else(|| VgsError::format(path, "tensor size overflows"))?;
            let payload = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| VgsError::format(path, "tensor size overflows"))?,
            )?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(dims, data)
                .map_err(|e| VgsError::format(path, format!("{name}: {e}")))?;
            tensors.push((name, t));
        }
        let json_len = r.u64()? as usize;
        let json = String::from_utf8(r.take(json_len)?.to_vec())
            .map_err(|_| VgsError::format(path, "metadata is not UTF-8"))?;
        if r.pos != bytes.len() {
            return Err(VgsError::format(
                path,
                format!("{} trailing bytes", bytes.len() - r.pos),
            ));
        }
        Ok(Archive { tensors, json })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| VgsError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| VgsError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                VgsError::format(
                    self.path,
                    format!(
                        "truncated: need {} bytes at offset {}, file has {}",
                        n,
                        self.pos,
                        self.bytes.len()
                    ),
                )
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn model_to_archive(params: &ModelParams) -> Result<Archive> {
    Ok(Archive {
        tensors: params
            .set
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect(),
        json: serde_json::to_string(&params.config)?,
    })
}

pub fn model_from_archive(archive: Archive) -> Result<ModelParams> {
    let config: ModelConfig = serde_json::from_str(&archive.json)?;
    let mut set = ParamSet::new();
    for (name, t) in archive.tensors {
        set.push(Parameter::new(name, t))?;
    }
    ModelParams::from_parts(config, set)
}

pub fn save_model(params: &ModelParams, path: &Path) -> Result<()> {
    model_to_archive(params)?.write(path)
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    model_from_archive(Archive::read(path)?)
}
