//! Self-describing binary dataset cache, little-endian:
//!
//! ```text
//! magic        8 bytes  "RRMDATA\0"
//! version      u32      1
//! n            u64      samples
//! dim          u64      features per sample
//! num_classes  u32
//! seed         u64      contamination seed
//! rate         f64      contamination rate
//! features     n*dim f32, row-major
//! clean        n u32
//! observed     n u32
//! contaminated ceil(n/8) bytes, bit (i % 8) of byte (i / 8), LSB first
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{ContaminatedDataset, Provenance};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RRMDATA\0";
const VERSION: u32 = 1;

pub fn write_cache(d: &ContaminatedDataset) -> Vec<u8> {
    let n = d.len();
    let mut out = Vec::with_capacity(48 + n * (d.dim() * 4 + 9));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(d.num_classes() as u32).to_le_bytes());
    let prov = d.provenance();
    out.extend_from_slice(&prov.seed.to_le_bytes());
    out.extend_from_slice(&prov.rate.to_le_bytes());
    for &v in d.features().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &y in d.clean_labels() {
        out.extend_from_slice(&(y as u32).to_le_bytes());
    }
    for &y in d.observed_labels() {
        out.extend_from_slice(&(y as u32).to_le_bytes());
    }
    let mut bitmap = vec![0u8; n.div_ceil(8)];
    for &i in d.contaminated_set() {
        bitmap[i / 8] |= 1 << (i % 8);
    }
    out.extend_from_slice(&bitmap);
    out
}

pub fn read_cache(bytes: &[u8], path: &Path) -> Result<ContaminatedDataset> {
    let err = |field: &'static str, message: String| Error::Format {
        path: path.to_path_buf(),
        field,
        message,
    };
    let mut pos = 0usize;
    let mut take = |n: usize, field: &'static str| -> Result<&[u8]> {
        if bytes.len().saturating_sub(pos) < n {
            return Err(Error::Format {
                path: path.to_path_buf(),
                field,
                message: format!("truncated: need {n} bytes at offset {pos}"),
            });
        }
        let s = &bytes[pos..pos + n];
        pos += n;
        Ok(s)
    };
    if take(8, "magic")? != MAGIC {
        return Err(err("magic", "not a dataset cache".into()));
    }
    let version = u32::from_le_bytes(take(4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(err("version", format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(take(8, "n")?.try_into().unwrap()) as usize;
    let dim = u64::from_le_bytes(take(8, "dim")?.try_into().unwrap()) as usize;
    let k = u32::from_le_bytes(take(4, "num_classes")?.try_into().unwrap()) as usize;
    let seed = u64::from_le_bytes(take(8, "seed")?.try_into().unwrap());
    let rate = f64::from_le_bytes(take(8, "rate")?.try_into().unwrap());
    let feats: Vec<f32> = take(n * dim * 4, "features")?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = |raw: &[u8]| -> Vec<usize> {
        raw.chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect()
    };
    let clean = labels(take(n * 4, "clean")?);
    let observed = labels(take(n * 4, "observed")?);
    let bitmap = take(n.div_ceil(8), "contaminated")?.to_vec();
    if pos != bytes.len() {
        return Err(err("contaminated", format!("{} trailing bytes", bytes.len() - pos)));
    }
    let features = Array2::from_shape_vec((n, dim), feats).expect("sized by header");
    let d = ContaminatedDataset::from_parts(features, observed, clean, k, Provenance { seed, rate })
        .map_err(|e| err("labels", e.to_string()))?;
    let mask = d.contamination_mask();
    for (i, &flag) in mask.iter().enumerate() {
        if (bitmap[i / 8] >> (i % 8)) & 1 != u8::from(flag) {
            return Err(err(
                "contaminated",
                format!("bitmap disagrees with labels at sample {i}"),
            ));
        }
    }
    Ok(d)
}

pub fn save_cache(d: &ContaminatedDataset, path: &Path) -> Result<()> {
    fs::write(path, write_cache(d)).map_err(|e| Error::io(path, e))
}

pub fn load_cache(path: &Path) -> Result<ContaminatedDataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_cache(&bytes, path)
}
