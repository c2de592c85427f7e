//! Checkpoint container: JSON header (config + vocabulary hashes)
//! followed by a named-tensor table.
//!
//! Layout, little-endian:
//!
//! ```text
//! magic "MMCP" | u32 version=1 | u32 header_len | header JSON
//! u32 n_tensors | per tensor:
//!   u32 name_len | name bytes | u32 ndim | u32 dims… | f64 data
//! ```

use super::{ModelConfig, ParameterSet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"MMCP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    src_vocab_hash: String,
    tgt_vocab_hash: String,
}

/// A trained (or initialized) model ready to write or decode with.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParameterSet,
    pub src_vocab_hash: String,
    pub tgt_vocab_hash: String,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let header = serde_json::to_vec(&Header {
        config: ckpt.config.clone(),
        src_vocab_hash: ckpt.src_vocab_hash.clone(),
        tgt_vocab_hash: ckpt.tgt_vocab_hash.clone(),
    })?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&(ckpt.params.len() as u32).to_le_bytes())?;
    for (name, tensor) in ckpt.params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for &d in tensor.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = std::fs::File::open(path)?;
    let mut r = BufReader::new(f);
    let mut offset = 0u64;

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, &mut offset, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected \"MMCP\""),
        });
    }
    let version = read_u32(&mut r, &mut offset, "version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported checkpoint version {version}"),
        });
    }
    let header_len = read_u32(&mut r, &mut offset, "header length")? as usize;
    let mut header_bytes = vec![0u8; header_len];
    read_exact(&mut r, &mut header_bytes, &mut offset, "header")?;
    let header: Header = serde_json::from_slice(&header_bytes)?;

    let n = read_u32(&mut r, &mut offset, "tensor count")? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..n {
        let name_len = read_u32(&mut r, &mut offset, "name length")? as usize;
        let mut name = vec![0u8; name_len];
        read_exact(&mut r, &mut name, &mut offset, "tensor name")?;
        let name = String::from_utf8(name).map_err(|e| Error::Format {
            offset,
            msg: format!("tensor name is not UTF-8: {e}"),
        })?;
        let ndim = read_u32(&mut r, &mut offset, "ndim")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(&mut r, &mut offset, "dim")? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            read_exact(&mut r, &mut buf, &mut offset, "tensor data")?;
            data.push(f64::from_le_bytes(buf));
        }
        tensors.insert(
            name,
            Tensor::new(shape, data).map_err(|e| Error::Format {
                offset,
                msg: e.to_string(),
            })?,
        );
    }
    let params = ParameterSet::from_tensors(tensors);
    params.check_against(&header.config)?;
    Ok(Checkpoint {
        config: header.config,
        params,
        src_vocab_hash: header.src_vocab_hash,
        tgt_vocab_hash: header.tgt_vocab_hash,
    })
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], offset: &mut u64, what: &str) -> Result<()> {
    match r.read_exact(buf) {
        Ok(()) => {
            *offset += buf.len() as u64;
            Ok(())
        }
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(Error::Format {
            offset: *offset,
            msg: format!("short read while reading {what}"),
        }),
        Err(e) => Err(e.into()),
    }
}

fn read_u32<R: Read>(r: &mut R, offset: &mut u64, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, offset, what)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FusionKind;

    fn toy_ckpt() -> Checkpoint {
        let cfg = ModelConfig {
            fusion: FusionKind::Direct,
            emb_dim: 8,
            hidden: 16,
            attn_dim: 16,
            dropout_src_emb: 0.4,
            dropout_enc_out: 0.5,
            dropout_dec_out: 0.5,
            src_vocab: 12,
            tgt_vocab: 12,
            feat_channels: 8,
            feat_positions: 4,
        };
        Checkpoint {
            params: ParameterSet::init(&cfg, 7).unwrap(),
            config: cfg,
            src_vocab_hash: "abc".into(),
            tgt_vocab_hash: "def".into(),
        }
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mmcp");
        let ckpt = toy_ckpt();
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.config, ckpt.config);
        assert_eq!(loaded.params, ckpt.params);
        assert_eq!(loaded.src_vocab_hash, "abc");

        // byte-stable across rewrites
        let path2 = dir.path().join("model2.mmcp");
        save_checkpoint(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn truncation_is_reported_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mmcp");
        save_checkpoint(&toy_ckpt(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::Format { .. })
        ));
    }
}
