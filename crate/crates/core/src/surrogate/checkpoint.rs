//! Model checkpoints.
//!
//! Layout: magic `VRNC`, `u16` version, `u32` length of the JSON-encoded
//! [`NetConfig`], the JSON text, a `u64` count of values, then every array as
//! little-endian `f64` in declaration order: input mean and std, target mean
//! and std, then per hidden layer `W`, `b` and, with batch normalization,
//! `γ`, `β`, running mean, running variance; finally the output `W` and `b`.

use std::io::{Read, Write};
use std::path::Path;

use super::{NetConfig, Surrogate};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VRNC";
pub const CHECKPOINT_VERSION: u16 = 1;

fn arrays(model: &Surrogate) -> Vec<&[f64]> {
    let p = &model.params;
    let mut v: Vec<&[f64]> = Vec::new();
    for a in [&p.input_mean, &p.input_std, &p.target_mean, &p.target_std] {
        v.push(a.as_slice().expect("standard layout"));
    }
    for h in &p.hidden {
        v.push(h.dense.w.as_slice().expect("standard layout"));
        v.push(h.dense.b.as_slice().expect("standard layout"));
        if let Some(bn) = &h.bn {
            for a in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                v.push(a.as_slice().expect("standard layout"));
            }
        }
    }
    v.push(p.output.w.as_slice().expect("standard layout"));
    v.push(p.output.b.as_slice().expect("standard layout"));
    v
}

fn arrays_mut(model: &mut Surrogate) -> Vec<&mut [f64]> {
    let p = &mut model.params;
    let mut v: Vec<&mut [f64]> = Vec::new();
    for a in [&mut p.input_mean, &mut p.input_std, &mut p.target_mean, &mut p.target_std] {
        v.push(a.as_slice_mut().expect("standard layout"));
    }
    for h in &mut p.hidden {
        v.push(h.dense.w.as_slice_mut().expect("standard layout"));
        v.push(h.dense.b.as_slice_mut().expect("standard layout"));
        if let Some(bn) = &mut h.bn {
            for a in [&mut bn.gamma, &mut bn.beta, &mut bn.running_mean, &mut bn.running_var] {
                v.push(a.as_slice_mut().expect("standard layout"));
            }
        }
    }
    v.push(p.output.w.as_slice_mut().expect("standard layout"));
    v.push(p.output.b.as_slice_mut().expect("standard layout"));
    v
}

pub fn write_checkpoint(model: &Surrogate, mut w: impl Write) -> Result<()> {
    let json = serde_json::to_vec(&model.config)?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let arrays = arrays(model);
    let count: usize = arrays.iter().map(|a| a.len()).sum();
    w.write_all(&(count as u64).to_le_bytes())?;
    for a in arrays {
        for v in a {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| Error::CorruptFile("checkpoint truncated".into()))?;
    let out = &buf[*pos..end];
    *pos = end;
    Ok(out)
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Surrogate> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    if take(&buf, &mut pos, 4)? != MAGIC {
        return Err(Error::CorruptFile("not a model checkpoint".into()));
    }
    let version = u16::from_le_bytes(take(&buf, &mut pos, 2)?.try_into().expect("2 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedSchema {
            found: format!("checkpoint v{version}"),
            expected: format!("checkpoint v{CHECKPOINT_VERSION}"),
        });
    }
    let len = u32::from_le_bytes(take(&buf, &mut pos, 4)?.try_into().expect("4 bytes")) as usize;
    let config: NetConfig = serde_json::from_slice(take(&buf, &mut pos, len)?)
        .map_err(|e| Error::CorruptFile(format!("checkpoint config: {e}")))?;
    let mut model = Surrogate::new(config).map_err(|e| Error::CorruptFile(format!("checkpoint config: {e}")))?;
    let count = u64::from_le_bytes(take(&buf, &mut pos, 8)?.try_into().expect("8 bytes")) as usize;
    let expected: usize = arrays(&model).iter().map(|a| a.len()).sum();
    if count != expected {
        return Err(Error::CorruptFile(format!(
            "checkpoint holds {count} values, config implies {expected}"
        )));
    }
    for a in arrays_mut(&mut model) {
        for v in a.iter_mut() {
            *v = f64::from_le_bytes(take(&buf, &mut pos, 8)?.try_into().expect("8 bytes"));
        }
    }
    if pos != buf.len() {
        return Err(Error::CorruptFile("trailing bytes after checkpoint".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Surrogate, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(model, std::io::BufWriter::new(f))
}

pub fn load_checkpoint(path: &Path) -> Result<Surrogate> {
    read_checkpoint(std::fs::File::open(path)?)
}
