//! Binary checkpoint files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "MSSDCKPT"
//! version      u32
//! config       u64 length + UTF-8 JSON of MssdConfig
//! model count  u32
//! per model:
//!   variable   u32 length + UTF-8
//!   norm flag  u8 (1 = present), then mean f64, std f64
//!   tensors    u32 count, then per tensor:
//!     name     u32 length + UTF-8
//!     shape    u32 rank, rank x u64
//!     values   numel x f64, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::training::NormStats;

use super::mssd::{MssdConfig, MssdModel};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MSSDCKPT";

/// A model together with the name of the variable it forecasts.
#[derive(Clone, Debug)]
pub struct NamedModel {
    pub variable: String,
    pub model: MssdModel,
}

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.inner.write_all(b)
    }
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn str(&mut self, s: &str) -> std::io::Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn exact<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| ckpt_err(format!("truncated file: {e}")))?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.exact::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.exact()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.exact()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.exact()?))
    }
    fn vec(&mut self, len: usize) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        (&mut self.inner)
            .take(len as u64)
            .read_to_end(&mut buf)
            .map_err(|e| ckpt_err(e.to_string()))?;
        if buf.len() != len {
            return Err(ckpt_err("truncated file"));
        }
        Ok(buf)
    }
    fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.vec(len)?).map_err(|_| ckpt_err("invalid UTF-8 string"))
    }
}

/// Writes all models to one file. Every model must share one configuration.
pub fn save_checkpoint(path: &Path, models: &[NamedModel]) -> Result<()> {
    let Some(first) = models.first() else {
        return Err(ckpt_err("nothing to save"));
    };
    if models.iter().any(|m| m.model.config != first.model.config) {
        return Err(ckpt_err("all models in a checkpoint must share a configuration"));
    }
    let config = serde_json::to_string(&first.model.config).map_err(|e| ckpt_err(e.to_string()))?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = Writer {
        inner: BufWriter::new(file),
    };
    let write = |w: &mut Writer<BufWriter<File>>| -> std::io::Result<()> {
        w.bytes(MAGIC)?;
        w.u32(CHECKPOINT_VERSION)?;
        w.u64(config.len() as u64)?;
        w.bytes(config.as_bytes())?;
        w.u32(models.len() as u32)?;
        for m in models {
            w.str(&m.variable)?;
            match &m.model.norm {
                Some(n) => {
                    w.bytes(&[1])?;
                    w.f64(n.mean)?;
                    w.f64(n.std)?;
                }
                None => {
                    w.bytes(&[0])?;
                    w.f64(0.0)?;
                    w.f64(0.0)?;
                }
            }
            w.u32(m.model.params.len() as u32)?;
            for (name, t) in m.model.params.iter() {
                w.str(name)?;
                w.u32(t.ndim() as u32)?;
                for &d in t.shape() {
                    w.u64(d as u64)?;
                }
                for &v in t.data() {
                    w.f64(v)?;
                }
            }
        }
        w.inner.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint written by [`save_checkpoint`]. Parameter values are
/// restored bit for bit.
pub fn load_checkpoint(path: &Path) -> Result<Vec<NamedModel>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        inner: BufReader::new(file),
    };
    if &r.exact::<8>()? != MAGIC {
        return Err(ckpt_err("not a checkpoint file (bad magic)"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(ckpt_err(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let config_len = r.u64()? as usize;
    let config_bytes = r.vec(config_len)?;
    let config: MssdConfig =
        serde_json::from_slice(&config_bytes).map_err(|e| ckpt_err(format!("bad configuration: {e}")))?;
    let count = r.u32()? as usize;
    let mut models = Vec::with_capacity(count);
    for _ in 0..count {
        let variable = r.str()?;
        let has_norm = r.u8()? == 1;
        let (mean, std) = (r.f64()?, r.f64()?);
        let mut model = MssdModel::new(config.clone())?;
        model.norm = has_norm.then_some(NormStats { mean, std });
        let n_tensors = r.u32()? as usize;
        if n_tensors != model.params.len() {
            return Err(ckpt_err(format!(
                "model {variable:?} has {n_tensors} tensors, configuration implies {}",
                model.params.len()
            )));
        }
        for _ in 0..n_tensors {
            let name = r.str()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let data = (0..numel).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let id = model
                .params
                .id_of(&name)
                .ok_or_else(|| ckpt_err(format!("unknown parameter {name:?}")))?;
            model.params.set(id, Tensor::new(shape, data)?)?;
        }
        models.push(NamedModel { variable, model });
    }
    Ok(models)
}
