//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "RRMCKPT\0"
//! version      u32      1
//! precision    u8       4 (f32) or 8 (f64)
//! activation   u8       0 relu, 1 tanh
//! bias         u8       0 or 1
//! reserved     u8       0
//! input_dim    u32
//! num_classes  u32
//! hidden_len   u32
//! hidden       hidden_len x u32
//! seed         u64      u64::MAX when unknown
//! param_count  u64
//! theta        param_count values at the stated precision
//! ```

use std::fs;
use std::path::Path;

use super::{Activation, Architecture, ModelState, Scalar};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RRMCKPT\0";
const VERSION: u32 = 1;
const NO_SEED: u64 = u64::MAX;

pub fn write_checkpoint<S: Scalar>(model: &ModelState<S>) -> Vec<u8> {
    let arch = model.arch();
    let mut out = Vec::with_capacity(64 + model.num_params() * S::WIDTH as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(S::WIDTH);
    out.push(arch.activation.code());
    out.push(u8::from(arch.bias));
    out.push(0);
    out.extend_from_slice(&(arch.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(arch.num_classes as u32).to_le_bytes());
    out.extend_from_slice(&(arch.hidden.len() as u32).to_le_bytes());
    for &h in &arch.hidden {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.seed().unwrap_or(NO_SEED).to_le_bytes());
    out.extend_from_slice(&(model.num_params() as u64).to_le_bytes());
    for &v in model.theta() {
        v.to_le(&mut out);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                field,
                message: format!("truncated: need {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint, converting parameters to `S` if the stored precision differs.
pub fn read_checkpoint<S: Scalar>(bytes: &[u8], path: &Path) -> Result<ModelState<S>> {
    let fmt = |field: &'static str, message: String| Error::Format {
        path: path.to_path_buf(),
        field,
        message,
    };
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8, "magic")? != MAGIC {
        return Err(fmt("magic", "not a checkpoint file".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(fmt("version", format!("unsupported version {version}")));
    }
    let width = r.u8("precision")?;
    let act = r.u8("activation")?;
    let activation =
        Activation::from_code(act).ok_or_else(|| fmt("activation", format!("unknown code {act}")))?;
    let bias = match r.u8("bias")? {
        0 => false,
        1 => true,
        b => return Err(fmt("bias", format!("expected 0 or 1, got {b}"))),
    };
    r.u8("reserved")?;
    let input_dim = r.u32("input_dim")? as usize;
    let num_classes = r.u32("num_classes")? as usize;
    let hidden_len = r.u32("hidden_len")? as usize;
    let mut hidden = Vec::with_capacity(hidden_len.min(64));
    for _ in 0..hidden_len {
        hidden.push(r.u32("hidden")? as usize);
    }
    let seed = r.u64("seed")?;
    let count = r.u64("param_count")? as usize;
    let arch = Architecture {
        input_dim,
        hidden,
        num_classes,
        activation,
        bias,
    };
    arch.validate()
        .map_err(|e| fmt("architecture", e.to_string()))?;
    if count != arch.param_count() {
        return Err(fmt(
            "param_count",
            format!("{count} does not match architecture ({})", arch.param_count()),
        ));
    }
    let theta: Vec<S> = match width {
        4 => r
            .take(count * 4, "theta")?
            .chunks_exact(4)
            .map(|c| S::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect(),
        8 => r
            .take(count * 8, "theta")?
            .chunks_exact(8)
            .map(|c| S::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect(),
        w => return Err(fmt("precision", format!("unsupported width {w}"))),
    };
    if r.pos != bytes.len() {
        return Err(fmt("theta", format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let seed = (seed != NO_SEED).then_some(seed);
    Ok(ModelState::from_theta(arch, theta)?.with_seed(seed))
}

pub fn save_checkpoint<S: Scalar>(model: &ModelState<S>, path: &Path) -> Result<()> {
    fs::write(path, write_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<ModelState<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes, path)
}
