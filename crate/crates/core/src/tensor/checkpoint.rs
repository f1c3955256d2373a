//! Flat binary parameter checkpoints.
//!
//! Layout: the magic string `RNSX1`, then one record per parameter in store
//! order. Each record is `name_len: u64 LE`, the UTF-8 name bytes,
//! `rank: u64 LE`, the extents as u64 LE, and the values as f64 LE.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{ParamStore, TensorData};

const MAGIC: &[u8; 5] = b"RNSX1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic: expected RNSX1")]
    BadMagic,
    #[error("truncated checkpoint while reading {0}")]
    Truncated(&'static str),
    #[error("parameter name is not valid UTF-8")]
    BadName,
    #[error("checkpoint parameter '{name}' does not match the model (expected shape {expected:?}, found {found:?})")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint is missing parameter '{0}'")]
    MissingParam(String),
    #[error("checkpoint has unknown parameter '{0}'")]
    UnknownParam(String),
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for (name, entry) in store.iter() {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        let shape = entry.value.shape();
        w.write_all(&(shape.len() as u64).to_le_bytes())?;
        for &extent in shape {
            w.write_all(&(extent as u64).to_le_bytes())?;
        }
        for &v in entry.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64(r: &mut impl Read, what: &'static str) -> Result<Option<u64>, CheckpointError> {
    let mut buf = [0u8; 8];
    let mut filled = 0;
    while filled < 8 {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None); // clean end of file
            }
            return Err(CheckpointError::Truncated(what));
        }
        filled += n;
    }
    Ok(Some(u64::from_le_bytes(buf)))
}

fn read_records(path: &Path) -> Result<Vec<(String, TensorData)>, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }

    let mut records = Vec::new();
    while let Some(name_len) = read_u64(&mut r, "name length")? {
        let mut name_bytes = vec![0u8; name_len as usize];
        r.read_exact(&mut name_bytes).map_err(|_| CheckpointError::Truncated("name"))?;
        let name = String::from_utf8(name_bytes).map_err(|_| CheckpointError::BadName)?;

        let rank = read_u64(&mut r, "rank")?.ok_or(CheckpointError::Truncated("rank"))?;
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            let extent = read_u64(&mut r, "extent")?.ok_or(CheckpointError::Truncated("extent"))?;
            shape.push(extent as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut buf).map_err(|_| CheckpointError::Truncated("values"))?;
            data.push(f64::from_le_bytes(buf));
        }
        let value = TensorData::new(shape, data).expect("shape/data sizes agree by construction");
        records.push((name, value));
    }
    Ok(records)
}

/// Load a checkpoint into a fresh parameter store, preserving file order.
pub fn load_checkpoint(path: &Path) -> Result<ParamStore, CheckpointError> {
    Ok(ParamStore::from_entries(read_records(path)?))
}

/// Load a checkpoint into an existing store, requiring an exact match of
/// parameter names and shapes (in any order).
pub fn load_checkpoint_into(store: &mut ParamStore, path: &Path) -> Result<(), CheckpointError> {
    let records = read_records(path)?;
    let mut seen = std::collections::HashSet::new();
    for (name, value) in records {
        let expected = store
            .value(&name)
            .map_err(|_| CheckpointError::UnknownParam(name.clone()))?
            .shape()
            .to_vec();
        if expected != value.shape() {
            return Err(CheckpointError::ShapeMismatch { name, expected, found: value.shape().to_vec() });
        }
        seen.insert(name.clone());
        store.set_value(&name, value).expect("shape checked above");
    }
    for name in store.names() {
        if !seen.contains(name) {
            return Err(CheckpointError::MissingParam(name.to_string()));
        }
    }
    Ok(())
}
