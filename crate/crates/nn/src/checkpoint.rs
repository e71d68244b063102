//! Model checkpoints: a small self-describing binary container holding a
//! JSON config echo plus the named parameter tensors, so a file can be
//! rejected (wrong model, wrong shapes) instead of silently misloaded.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::optim::ParamSet;
use crate::NnError;

const MAGIC: &[u8; 4] = b"ESPC";
const VERSION: u32 = 1;

/// One named tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// Writes `params` (in registration order) with a config echo. The config
/// string is typically the serialized model configuration; it is stored
/// verbatim and returned verbatim by [`load_checkpoint`].
pub fn save_checkpoint(
    path: &Path,
    config_json: &str,
    params: &ParamSet<f32>,
) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_bytes(&mut w, config_json.as_bytes())?;
    w.write_all(&u32::try_from(params.len()).expect("tensor count").to_le_bytes())?;
    for (name, tensor) in params.iter() {
        write_bytes(&mut w, name.as_bytes())?;
        let shape = tensor.shape();
        w.write_all(&u32::try_from(shape.len()).expect("rank").to_le_bytes())?;
        for &d in shape {
            w.write_all(&u32::try_from(d).expect("dimension").to_le_bytes())?;
        }
        for v in tensor.data().iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint back as `(config_echo, entries)`.
pub fn load_checkpoint(path: &Path) -> Result<(String, Vec<CheckpointEntry>), NnError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint(format!("bad magic {magic:02x?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let config = String::from_utf8(read_bytes(&mut r)?)
        .map_err(|e| NnError::Checkpoint(format!("config is not UTF-8: {e}")))?;
    let count = read_u32(&mut r)? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name = String::from_utf8(read_bytes(&mut r)?)
            .map_err(|e| NnError::Checkpoint(format!("tensor name is not UTF-8: {e}")))?;
        let rank = read_u32(&mut r)? as usize;
        if rank > 8 {
            return Err(NnError::Checkpoint(format!("tensor {name:?} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut values = vec![0.0f32; len];
        for v in &mut values {
            let mut buf = [0u8; 4];
            read_exact(&mut r, &mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
        entries.push(CheckpointEntry { name, shape, values });
    }
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing)? {
        0 => Ok((config, entries)),
        _ => Err(NnError::Checkpoint("trailing bytes after last tensor".into())),
    }
}

/// Copies loaded entries into a parameter set, matching by name and
/// requiring identical shapes. Every parameter must be present exactly
/// once; extra entries are an error (they indicate a different model).
pub fn apply_entries(entries: &[CheckpointEntry], params: &ParamSet<f32>) -> Result<(), NnError> {
    if entries.len() != params.len() {
        return Err(NnError::Checkpoint(format!(
            "checkpoint has {} tensors, model has {}",
            entries.len(),
            params.len()
        )));
    }
    for entry in entries {
        let Some(tensor) = params.get(&entry.name) else {
            return Err(NnError::Checkpoint(format!(
                "checkpoint tensor {:?} has no matching parameter",
                entry.name
            )));
        };
        if tensor.shape() != entry.shape.as_slice() {
            return Err(NnError::Checkpoint(format!(
                "shape mismatch for {:?}: checkpoint {:?}, model {:?}",
                entry.name,
                entry.shape,
                tensor.shape()
            )));
        }
        tensor.set_data(&entry.values);
    }
    Ok(())
}

fn write_bytes(w: &mut impl Write, bytes: &[u8]) -> Result<(), NnError> {
    w.write_all(&u32::try_from(bytes.len()).expect("length fits u32").to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), NnError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            NnError::Checkpoint("unexpected end of file".into())
        } else {
            NnError::Io(e)
        }
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32, NnError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_bytes(r: &mut impl Read) -> Result<Vec<u8>, NnError> {
    let len = read_u32(r)? as usize;
    if len > (1 << 26) {
        return Err(NnError::Checkpoint(format!("implausible length field {len}")));
    }
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf)?;
    Ok(buf)
}
