//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "GKPT1"
//! u32 len, model spec text (UTF-8, rendered .gknet form)
//! u64 initialization seed
//! u32 len, metadata JSON (class names, preprocessing)
//! u32 tensor count
//!   per tensor: u32 rank, rank x u64 extents, f64 values
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::PreprocessMode;
use crate::error::{Error, Result};
use crate::model::{instantiate, parse_model_spec};
use crate::nn::Network;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"GKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub classes: Vec<String>,
    pub preprocess: PreprocessMode,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network,
    pub meta: CheckpointMeta,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("length {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) -> Result<()> {
    put_u32(out, bytes.len())?;
    out.extend_from_slice(bytes);
    Ok(())
}

pub fn to_bytes(network: &Network, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    if meta.classes.len() != network.class_count() {
        return Err(Error::Checkpoint(format!(
            "{} class names for a {}-class network",
            meta.classes.len(),
            network.class_count()
        )));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_bytes(&mut out, network.config().render().as_bytes())?;
    out.extend_from_slice(&network.rng_seed().to_le_bytes());
    let meta_json = serde_json::to_string(meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
    put_bytes(&mut out, meta_json.as_bytes())?;
    let params = network.params();
    put_u32(&mut out, params.len())?;
    for t in params {
        put_u32(&mut out, t.rank())?;
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!("truncated while reading {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<&'a str> {
        let n = self.u32(what)?;
        std::str::from_utf8(self.take(n, what)?).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a GKPT1 checkpoint".into()));
    }
    let spec = cur.string("model spec")?;
    let config = parse_model_spec(spec).map_err(|e| Error::Checkpoint(format!("embedded model spec: {e}")))?;
    let seed = cur.u64("seed")?;
    let meta: CheckpointMeta = serde_json::from_str(cur.string("metadata")?)
        .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let count = cur.u32("tensor count")?;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let what = format!("tensor {i}");
        let rank = cur.u32(&what)?;
        let shape = (0..rank)
            .map(|_| cur.u64(&what).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("{what}: size overflow")))?;
        let raw = cur.take(n.saturating_mul(8), &what)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Tensor::new(&shape, data).map_err(|e| Error::Checkpoint(format!("{what}: {e}")))?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    let mut network = instantiate(&config, seed)?;
    network
        .restore(&tensors)
        .map_err(|e| Error::Checkpoint(format!("parameters do not match the model: {e}")))?;
    if meta.classes.len() != network.class_count() {
        return Err(Error::Checkpoint("class names do not match the model".into()));
    }
    Ok(Checkpoint { network, meta })
}

pub fn save_checkpoint(network: &Network, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let bytes = to_bytes(network, meta)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.is_file() {
        return Err(Error::Checkpoint(format!("{} does not exist", path.display())));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
