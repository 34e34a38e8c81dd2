//! Versioned checkpoint files: a JSON metadata header followed by a flat
//! named-parameter archive of little-endian f64 tensors. Serialization is
//! byte-deterministic given the model, so fixed-seed runs produce
//! hash-identical files.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::sample::VariantConfig;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"OCUC";
const FORMAT_VERSION: u32 = 1;

/// Run metadata stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model_id: String,
    pub variant: VariantConfig,
    pub encoder: EncoderConfig,
    pub config_hash: String,
    pub selected_epoch: Option<usize>,
    pub validation_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&self.meta)?;
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);

        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for slot in 0..self.params.len() {
            let name = self.params.names()[slot].as_bytes();
            let tensor = self.params.tensor(slot);
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&(tensor.shape().len() as u64).to_le_bytes());
            for &dim in tensor.shape() {
                out.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut file = fs::File::open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let mut cursor = Cursor::new(&bytes);

        let magic = cursor.take_bytes(4)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".to_string()));
        }
        let version = u32::from_le_bytes(cursor.take_bytes(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let header_len = cursor.take_u64()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(cursor.take_bytes(header_len)?)?;
        meta.encoder.validate()?;

        let n_params = cursor.take_u64()? as usize;
        let mut names = Vec::with_capacity(n_params);
        let mut tensors = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let name_len = cursor.take_u64()? as usize;
            let name = String::from_utf8(cursor.take_bytes(name_len)?.to_vec())
                .map_err(|e| Error::Checkpoint(format!("bad parameter name: {e}")))?;
            let ndims = cursor.take_u64()? as usize;
            let mut shape = Vec::with_capacity(ndims);
            for _ in 0..ndims {
                shape.push(cursor.take_u64()? as usize);
            }
            let count: usize = shape.iter().product();
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                data.push(f64::from_le_bytes(
                    cursor.take_bytes(8)?.try_into().unwrap(),
                ));
            }
            names.push(name);
            tensors.push(Tensor::from_vec(&shape, data));
        }
        if cursor.remaining() != 0 {
            return Err(Error::Checkpoint("trailing bytes".to_string()));
        }
        Ok(Checkpoint {
            params: ModelParams::from_parts(meta.encoder.clone(), names, tensors),
            meta,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take_bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated file".to_string()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn take_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take_bytes(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Stable hex hash of any serializable config, stored in reports so results
/// can be traced back to the exact configuration.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    format!("{:016x}", crate::encoder::fnv1a64(json.as_bytes()))
}
