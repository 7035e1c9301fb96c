//! Binary parameter files: `BIGC`, a `u32` format version, a `u64`
//! iteration count, a `u32` blob count, then per blob a `u32` name length,
//! the UTF-8 name, `u32` rows, `u32` cols and `rows·cols` little-endian
//! `f64` values, in parameter visiting order.

use std::path::Path;

use super::config::PipelineConfig;
use super::model::{check_shapes, ModelParams};
use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::tensor::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BIGC";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ModelParams, iteration: usize) -> Vec<u8> {
    let named = params.named();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(iteration as u64).to_le_bytes());
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, m) in named {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} while reading {what}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Parses a checkpoint into `(iteration, named blobs)`.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(usize, Vec<(String, Matrix)>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("missing BIGC magic".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} unsupported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let iteration = r.u64("iteration")? as usize;
    let count = r.u32("blob count")?;
    let mut blobs = Vec::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let at = r.pos;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Checkpoint(format!("non-UTF-8 name at byte {at}")))?
            .to_string();
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let raw = r.take(rows * cols * 8, &name)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        blobs.push((name, Matrix::new(rows, cols, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last blob",
            bytes.len() - r.pos
        )));
    }
    Ok((iteration, blobs))
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, iteration: usize) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params, iteration)).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint and checks every blob against the layout `cfg` implies.
pub fn load_checkpoint(path: &Path, cfg: &PipelineConfig) -> Result<(ModelParams, usize)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (iteration, blobs) = decode_checkpoint(&bytes)?;
    let mut params = ModelParams::init(cfg, 0)?;
    let expected = params.count();
    if blobs.len() != expected {
        return Err(Error::Checkpoint(format!(
            "{} parameters stored, configuration expects {expected}",
            blobs.len()
        )));
    }
    let mut blobs = blobs.into_iter();
    let mut failure = None;
    params.visit_mut("", &mut |name, slot| {
        let (stored, m) = blobs.next().expect("count checked");
        if failure.is_some() {
            return;
        }
        if stored != name || m.shape() != slot.shape() {
            failure = Some(format!(
                "stored {stored} {:?} does not match expected {name} {:?}",
                m.shape(),
                slot.shape()
            ));
        } else {
            *slot = m;
        }
    });
    if let Some(f) = failure {
        return Err(Error::Checkpoint(f));
    }
    check_shapes(cfg, &params)?;
    Ok((params, iteration))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = PipelineConfig::tiny();
        let p = ModelParams::init(&cfg, 3).unwrap();
        let bytes = encode_checkpoint(&p, 17);
        assert_eq!(&bytes[..4], b"BIGC");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bigc");
        save_checkpoint(&path, &p, 17).unwrap();
        let (back, it) = load_checkpoint(&path, &cfg).unwrap();
        assert_eq!(it, 17);
        assert_eq!(back, p);
    }

    #[test]
    fn corrupt_files_rejected() {
        let cfg = PipelineConfig::tiny();
        let p = ModelParams::init(&cfg, 3).unwrap();
        let bytes = encode_checkpoint(&p, 0);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_checkpoint(b"NOPE").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }

    #[test]
    fn mismatched_configuration_rejected() {
        let cfg = PipelineConfig::tiny();
        let p = ModelParams::init(&cfg, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bigc");
        save_checkpoint(&path, &p, 0).unwrap();
        let other = PipelineConfig {
            aggregation_channels: 6,
            ..cfg
        };
        let err = load_checkpoint(&path, &other).unwrap_err().to_string();
        assert!(err.contains("does not match"), "{err}");
    }
}
