//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "MASKGAN\0"
//! version    u32      FORMAT_VERSION
//! vocab      u32
//! embed      u32
//! hidden     u32
//! layers     u32
//! flags      u32      bit 0: generator/discriminator share embeddings
//!                     bit 1: generator never emits <pad> or <m>
//! dropout    f32
//! blocks     u32      number of parameter blocks
//! per block:
//!   name_len u32, name (UTF-8)
//!   ndim     u32, dims (u32 each)
//!   values   f32 × product(dims)
//! ```
//!
//! Every integer and float is little-endian.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::models::{MaskGan, ModelConfig};
use crate::numerics::ParamId;

pub const MAGIC: &[u8; 8] = b"MASKGAN\0";
pub const FORMAT_VERSION: u32 = 1;

/// A named parameter block as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub blocks: Vec<Block>,
}

fn err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| err("value does not fit in u32"))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

impl Checkpoint {
    /// Snapshot of the listed parameters of `model`.
    pub fn capture(model: &MaskGan, params: &[ParamId]) -> Self {
        let blocks = params
            .iter()
            .map(|&id| {
                let t = model.store.get(id);
                Block {
                    name: model.store.name(id).into(),
                    shape: t.shape().to_vec(),
                    values: t.values().iter().map(|&v| v as f32).collect(),
                }
            })
            .collect();
        Self {
            config: model.config,
            blocks,
        }
    }

    /// Snapshot of every parameter of `model`.
    pub fn capture_all(model: &MaskGan) -> Self {
        let ids: Vec<ParamId> = model.store.ids().collect();
        Self::capture(model, &ids)
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_u32(&mut out, c.vocab_size)?;
        put_u32(&mut out, c.embed_dim)?;
        put_u32(&mut out, c.hidden_dim)?;
        put_u32(&mut out, c.layers)?;
        put_u32(&mut out, c.share_embeddings as usize | (c.suppress_specials as usize) << 1)?;
        out.extend_from_slice(&(c.dropout as f32).to_le_bytes());
        put_u32(&mut out, self.blocks.len())?;
        for b in &self.blocks {
            put_u32(&mut out, b.name.len())?;
            out.extend_from_slice(b.name.as_bytes());
            put_u32(&mut out, b.shape.len())?;
            for &d in &b.shape {
                put_u32(&mut out, d)?;
            }
            if b.shape.iter().product::<usize>() != b.values.len() {
                return Err(err(alloc::format!("block {} shape/value mismatch", b.name)));
            }
            for v in &b.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(err("bad magic; not a checkpoint"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(err(alloc::format!("unsupported format version {version}")));
        }
        let vocab_size = r.u32()? as usize;
        let embed_dim = r.u32()? as usize;
        let hidden_dim = r.u32()? as usize;
        let layers = r.u32()? as usize;
        let flags = r.u32()?;
        let dropout = r.f32()? as f64;
        let config = ModelConfig {
            vocab_size,
            embed_dim,
            hidden_dim,
            layers,
            dropout,
            share_embeddings: flags & 1 == 1,
            suppress_specials: flags & 2 == 2,
        };
        let n = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = core::str::from_utf8(r.take(len)?).map_err(|_| err("block name is not UTF-8"))?.into();
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            let values = (0..count).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            blocks.push(Block { name, shape, values });
        }
        if r.pos != bytes.len() {
            return Err(err("trailing bytes after last block"));
        }
        Ok(Self { config, blocks })
    }

    /// Builds a model from the stored config, initialised with `seed`, and
    /// overwrites every parameter present in the checkpoint.
    pub fn restore(&self, seed: u64) -> Result<MaskGan> {
        let mut model = MaskGan::new(self.config, seed)?;
        self.apply(&mut model)?;
        Ok(model)
    }

    /// Overwrites the matching parameters of `model`.
    pub fn apply(&self, model: &mut MaskGan) -> Result<()> {
        if model.config.dims() != self.config.dims() {
            return Err(err("checkpoint dimensions differ from the model"));
        }
        for b in &self.blocks {
            let id = model
                .store
                .id(&b.name)
                .ok_or_else(|| err(alloc::format!("unknown parameter block {}", b.name)))?;
            let t = model.store.get_mut(id);
            if t.shape() != b.shape.as_slice() {
                return Err(err(alloc::format!(
                    "block {} has shape {:?}, model expects {:?}",
                    b.name,
                    b.shape,
                    t.shape()
                )));
            }
            for (dst, &src) in t.values_mut().iter_mut().zip(&b.values) {
                *dst = src as f64;
            }
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| err("truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 7,
            embed_dim: 3,
            hidden_dim: 4,
            layers: 2,
            dropout: 0.1,
            share_embeddings: true,
            suppress_specials: true,
        }
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let m = MaskGan::new(tiny(), 11).unwrap();
        let bytes = Checkpoint::capture_all(&m).to_bytes().unwrap();
        let ck = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(ck.to_bytes().unwrap(), bytes);
        let restored = ck.restore(999).unwrap();
        assert_eq!(restored.store, m.store);
        assert_eq!(&bytes[..8], MAGIC);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let m = MaskGan::new(tiny(), 1).unwrap();
        let bytes = Checkpoint::capture_all(&m).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut ver = bytes.clone();
        ver[8] = 9;
        assert!(Checkpoint::from_bytes(&ver).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }

    #[test]
    fn partial_checkpoint_keeps_other_params() {
        let m = MaskGan::new(tiny(), 3).unwrap();
        let ck = Checkpoint::capture(&m, &m.generator_params());
        let r = ck.restore(4).unwrap();
        let other = MaskGan::new(tiny(), 4).unwrap();
        let head = m.discriminator.head_w;
        assert_eq!(r.store.get(head), other.store.get(head));
        for id in m.generator_params() {
            assert_eq!(r.store.get(id).values(), m.store.get(id).values());
        }
    }
}
