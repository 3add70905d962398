//! Model checkpoint format (little-endian).
//!
//! ```text
//! header    "MLCK", u32 version = 1, u32 tensor count, u32 flags = 0
//! manifest  u32 byte length, UTF-8 JSON {"model": ModelConfig, "run": ...}
//! shapes    per tensor: u32 name length, name bytes, u32 rank, rank × u32 dims
//! blob      all tensor values in table order as f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde_json::{json, Value};

use super::model::{GnnModel, ModelConfig};
use crate::binio::{count_u32, read_f32s, read_header, write_f32s, write_header, Header};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MLCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: GnnModel,
    /// Free-form run manifest (hyperparameters, seeds, inputs).
    pub run: Value,
}

fn write_bytes(w: &mut impl Write, bytes: &[u8]) -> Result<()> {
    w.write_u32::<LittleEndian>(count_u32(bytes.len())?)?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_bytes(r: &mut impl Read, limit: usize) -> Result<Vec<u8>> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    if n > limit {
        return Err(Error::Format(format!("length {n} exceeds limit {limit}")));
    }
    let mut buf = vec![0; n];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn write_checkpoint(w: &mut impl Write, model: &GnnModel, run: &Value) -> Result<()> {
    let tensors = &model.params.tensors;
    write_header(w, MAGIC, Header { version: VERSION, count: count_u32(tensors.len())?, flags: 0 })?;
    let manifest = json!({ "model": model.config, "run": run });
    write_bytes(w, serde_json::to_string(&manifest)?.as_bytes())?;
    for t in tensors {
        write_bytes(w, t.name.as_bytes())?;
        w.write_u32::<LittleEndian>(count_u32(t.shape.len())?)?;
        for &d in &t.shape {
            w.write_u32::<LittleEndian>(count_u32(d)?)?;
        }
    }
    for t in tensors {
        write_f32s(w, t.data.iter().copied())?;
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    let h = read_header(r, MAGIC, VERSION)?;
    let manifest: Value = serde_json::from_slice(&read_bytes(r, 1 << 24)?)?;
    let config: ModelConfig = serde_json::from_value(
        manifest
            .get("model")
            .cloned()
            .ok_or_else(|| Error::Format("checkpoint manifest lacks a model config".into()))?,
    )?;
    let mut model = GnnModel::new(config, 0)?;
    if h.count as usize != model.params.tensors.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} tensors, configuration implies {}",
            h.count,
            model.params.tensors.len()
        )));
    }
    for t in &model.params.tensors {
        let name = String::from_utf8(read_bytes(r, 1024)?).map_err(|e| Error::Format(e.to_string()))?;
        let rank = r.read_u32::<LittleEndian>()? as usize;
        if rank > 8 {
            return Err(Error::Format(format!("tensor {name} has rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| Ok(r.read_u32::<LittleEndian>()? as usize))
            .collect::<Result<Vec<_>>>()?;
        if name != t.name || shape != t.shape {
            return Err(Error::Format(format!(
                "tensor {name} {shape:?} does not match expected {} {:?}",
                t.name, t.shape
            )));
        }
    }
    for t in &mut model.params.tensors {
        t.data = read_f32s(r, t.data.len())?;
    }
    if !model.params.is_finite() {
        return Err(Error::Format("checkpoint contains non-finite parameters".into()));
    }
    let run = manifest.get("run").cloned().unwrap_or(Value::Null);
    Ok(Checkpoint { model, run })
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &GnnModel, run: &Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, model, run)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rounds_through_f32() {
        let model = GnnModel::new(ModelConfig::tiny(11), 4).unwrap();
        let run = json!({"seed": 4});
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &model, &run).unwrap();
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back.run, run);
        assert_eq!(back.model, model.rounded_to_f32());
    }

    #[test]
    fn truncated_and_foreign_files_fail() {
        let model = GnnModel::new(ModelConfig::tiny(11), 4).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &model, &Value::Null).unwrap();
        assert!(read_checkpoint(&mut &buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&mut bad.as_slice()), Err(Error::Format(_))));
    }
}
