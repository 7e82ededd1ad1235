//! Binary model checkpoints.
//!
//! All integers are little-endian `u32`, reals little-endian `f64`:
//!
//! ```text
//! magic        8 bytes  "RSALCKPT"
//! version      u32      1
//! config_len   u32      byte length of the config text
//! config       UTF-8    AutoencoderConfig::to_text()
//! param_count  u32
//! per parameter:
//!   name_len   u32
//!   name       UTF-8
//!   ndim       u32
//!   dims       ndim × u32
//!   values     prod(dims) × f64
//! ```

use std::path::Path;

use super::{AutoencoderConfig, AutoencoderModel, Parameter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"RSALCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Length {
            expected: self.pos.saturating_add(n),
            actual: self.bytes.len(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }
}

impl AutoencoderModel {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let config = self.config.to_text();
        let mut out = Vec::with_capacity(64 + config.len() + 8 * self.parameter_count());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.extend_from_slice(&(p.value.ndim() as u32).to_le_bytes());
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a model checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let config_len = r.u32()? as usize;
        let config = AutoencoderConfig::from_text(&r.string(config_len)?)?;
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = r.string(name_len)?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| Error::Format("parameter too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            params.push(Parameter { name, value: Tensor::new(shape, data)? });
        }
        if r.pos != bytes.len() {
            return Err(Error::Length { expected: r.pos, actual: bytes.len() });
        }
        Self::from_parameters(config, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }

    /// Errors naming the first parameter whose shape differs under `config`.
    pub fn check_architecture(&self, config: &AutoencoderConfig) -> Result<()> {
        let expected = AutoencoderModel::build(config.clone())?;
        expected.check_parameters(&self.params)?;
        if expected.config.encoder != self.config.encoder || expected.config.decoder != self.config.decoder {
            return Err(Error::Config("checkpoint layer stack differs from configuration".into()));
        }
        Ok(())
    }
}
