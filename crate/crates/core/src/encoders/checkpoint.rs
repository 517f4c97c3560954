//! Checkpoint format: a length-prefixed JSON header (config, seed, epoch,
//! tensor names and shapes) followed by each tensor's values as
//! little-endian f64, in header order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::config::EncoderConfig;
use crate::encoders::params::ModelParams;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

const MAGIC: &[u8; 4] = b"VGSC";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: EncoderConfig,
    pub seed: u64,
    pub epoch: u32,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: EncoderConfig,
    pub seed: u64,
    pub epoch: u32,
    pub params: ModelParams,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let named = ckpt.params.named_tensors();
    let header = CheckpointHeader {
        format_version: 1,
        config: ckpt.config.clone(),
        seed: ckpt.seed,
        epoch: ckpt.epoch,
        tensors: named
            .iter()
            .map(|(name, t)| TensorInfo {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| Error::ingest(format!("checkpoint header encode: {e}")))?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for (_, t) in named {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[0..4] != MAGIC {
        return Err(Error::ingest(format!(
            "{}: not a checkpoint file",
            path.display()
        )));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + header_len {
        return Err(Error::ingest(format!("{}: truncated header", path.display())));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[8..8 + header_len])
        .map_err(|e| Error::ingest(format!("{}: bad header: {e}", path.display())))?;
    if header.format_version != 1 {
        return Err(Error::ingest(format!(
            "{}: unsupported checkpoint version {}",
            path.display(),
            header.format_version
        )));
    }

    let mut at = 8 + header_len;
    let mut map = BTreeMap::new();
    for info in &header.tensors {
        let n: usize = info.shape.iter().product();
        let end = at + n * 8;
        if end > bytes.len() {
            return Err(Error::ingest(format!(
                "{}: truncated payload at tensor '{}'",
                path.display(),
                info.name
            )));
        }
        let data: Vec<f64> = bytes[at..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        map.insert(info.name.clone(), Tensor::new(info.shape.clone(), data)?);
        at = end;
    }
    if at != bytes.len() {
        return Err(Error::ingest(format!(
            "{}: {} trailing bytes after payload",
            path.display(),
            bytes.len() - at
        )));
    }

    let params = ModelParams::from_named(&header.config, &map)?;
    Ok(Checkpoint {
        config: header.config,
        seed: header.seed,
        epoch: header.epoch,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let config = EncoderConfig {
            feature_dim: 39,
            conv_channels: 4,
            conv_kernel: 3,
            conv_stride: 2,
            gru_layers: 2,
            gru_hidden: 3,
            attn_hidden: 2,
            image_feature_dim: 5,
        };
        let ckpt = Checkpoint {
            config: config.clone(),
            seed: 99,
            epoch: 17,
            params: ModelParams::init(&config, 99),
        };
        let dir = std::env::temp_dir().join("vgslab_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.seed, 99);
        assert_eq!(back.epoch, 17);
        assert_eq!(back.config, config);
        for ((na, ta), (nb, tb)) in ckpt
            .params
            .named_tensors()
            .iter()
            .zip(back.params.named_tensors())
        {
            assert_eq!(*na, nb);
            assert_eq!(ta.data(), tb.data());
        }
    }

    #[test]
    fn garbage_rejected() {
        let dir = std::env::temp_dir().join("vgslab_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("garbage.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Ingest(_))));
    }
}
