//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic "NM1CKPT\0" | u32 version
//! u64 n_bus, n_branch, n_gen, n_load
//! u64 n_in, n_out, width, blocks
//! f64[n_in] input mean | f64[n_in] input std
//! f64[n_out] output mean | f64[n_out] output std
//! per layer (input, blocks.., output): f64 weight (row-major), f64 bias
//! ```

use std::fs;
use std::path::Path;

use super::codec::FeatureCodec;
use super::model::{Architecture, ModelParams};
use super::Surrogate;
use crate::dataset::RecordShape;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NM1CKPT\0";
pub const VERSION: u32 = 1;

fn put_u64(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(model: &Surrogate) -> Vec<u8> {
    let codec = &model.codec;
    let arch = model.params.arch;
    let mut buf =
        Vec::with_capacity(64 + 8 * (model.params.n_params() + 2 * (arch.n_in + arch.n_out)));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        codec.shape.n_bus,
        codec.shape.n_branch,
        codec.shape.n_gen,
        codec.shape.n_load,
    ] {
        put_u64(&mut buf, v);
    }
    for v in [arch.n_in, arch.n_out, arch.width, arch.blocks] {
        put_u64(&mut buf, v);
    }
    for stats in [
        &codec.input_mean,
        &codec.input_std,
        &codec.output_mean,
        &codec.output_std,
    ] {
        put_f64s(&mut buf, stats);
    }
    for t in model.params.tensors() {
        put_f64s(&mut buf, t);
    }
    buf
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
            })?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= 1 << 32)
            .ok_or_else(|| Error::Checkpoint(format!("implausible dimension {v}")))
    }

    fn f64s(&mut self, out: &mut [f64]) -> Result<()> {
        let bytes = self.take(8 * out.len())?;
        for (v, c) in out.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
        Ok(())
    }

    fn vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut v = vec![0.0; n];
        self.f64s(&mut v)?;
        Ok(v)
    }
}

pub fn decode(data: &[u8]) -> Result<Surrogate> {
    let mut r = Reader { data, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint(
            "not a checkpoint file (bad magic)".into(),
        ));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let shape = RecordShape {
        n_bus: r.usize()?,
        n_branch: r.usize()?,
        n_gen: r.usize()?,
        n_load: r.usize()?,
    };
    let arch = Architecture {
        n_in: r.usize()?,
        n_out: r.usize()?,
        width: r.usize()?,
        blocks: r.usize()?,
    };
    let codec = FeatureCodec {
        shape,
        input_mean: r.vec(arch.n_in)?,
        input_std: r.vec(arch.n_in)?,
        output_mean: r.vec(arch.n_out)?,
        output_std: r.vec(arch.n_out)?,
    };
    let mut params = ModelParams::zeros(arch);
    for t in params.tensors_mut() {
        r.f64s(t)?;
    }
    if r.pos != data.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            data.len() - r.pos
        )));
    }
    Surrogate::new(codec, params)
}

pub fn save(model: &Surrogate, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Surrogate> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&data)
}
