//! Binary checkpoints.
//!
//! Layout, all integers little-endian: magic `STGCCKPT`, `u32` version,
//! config text and skeleton text (each `u32` length + UTF-8), `u32` tensor
//! count, then per tensor: name, `u32` rank, `u64` extents, `u8` trainable
//! flag, and the `f64` values.

use std::path::Path;

use super::config::ModelConfig;
use super::network::Model;
use crate::error::{Error, Result};
use crate::graphs::SkeletonSpec;
use crate::numerics::Tensor;

const MAGIC: &[u8; 8] = b"STGCCKPT";
const VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg: String = model.config.to_kv().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    put_str(&mut out, &cfg);
    put_str(&mut out, &model.config.skeleton.as_ref().map(|s| s.to_text()).unwrap_or_default());
    out.extend_from_slice(&(model.store.len() as u32).to_le_bytes());
    for (_, p) in model.store.iter() {
        put_str(&mut out, &p.name);
        out.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.push(p.trainable as u8);
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    source: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.to_string(),
            line: 0,
            msg: format!("at byte {}: {}", self.pos, msg.into()),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err("unexpected end of checkpoint"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.err("invalid UTF-8"))
    }
}

pub fn from_bytes(buf: &[u8], source: &str) -> Result<Model> {
    let mut r = Reader { buf, pos: 0, source };
    if r.take(8)? != MAGIC {
        return Err(r.err("not a checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported checkpoint version {version}")));
    }
    let mut cfg = ModelConfig::default();
    for line in r.str()?.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| r.err(format!("bad config line {line:?}")))?;
        cfg.set(k, v)?;
    }
    let skeleton = r.str()?;
    if !skeleton.is_empty() {
        cfg.skeleton = Some(SkeletonSpec::parse(&skeleton)?);
    }
    let mut model = Model::build(&cfg)?;
    let count = r.u32()? as usize;
    if count != model.store.len() {
        return Err(r.err(format!("expected {} tensors, found {count}", model.store.len())));
    }
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        let name = r.str()?;
        let expect = &model.store.get(id).name;
        if &name != expect {
            return Err(r.err(format!("expected tensor {expect}, found {name}")));
        }
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let trainable = r.take(1)?[0] != 0;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| r.err("tensor too large"))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        model.store.set_value(id, Tensor::new(&shape, data)?)?;
        model.store.get_mut(id).trainable = trainable;
    }
    if r.pos != buf.len() {
        return Err(r.err("trailing bytes"));
    }
    Ok(model)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf, &path.display().to_string())
}
