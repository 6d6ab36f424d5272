//! Model checkpoints: JSON header (variant, hyperparameters, tensor
//! manifest) plus a raw little-endian f64 weight blob. Bit-exact round
//! trips.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::RealTensor;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the weight blob, in f64 elements.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub schema_version: u32,
    pub variant: String,
    pub hyperparameters: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

/// Write named tensors under `path` (a basename; `.json` and `.weights`
/// files are produced).
pub fn write_checkpoint(
    path: &Path,
    variant: &str,
    hyperparameters: serde_json::Value,
    tensors: &[(String, RealTensor)],
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut entries = Vec::new();
    let mut blob = Vec::new();
    let mut offset = 0usize;
    for (name, t) in tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape.clone(),
            offset,
            len: t.len(),
        });
        for v in &t.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        offset += t.len();
    }
    let header = CheckpointHeader {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        variant: variant.into(),
        hyperparameters,
        tensors: entries,
    };
    fs::write(path.with_extension("json"), serde_json::to_vec_pretty(&header)?)?;
    fs::write(path.with_extension("weights"), blob)?;
    Ok(())
}

/// Read a checkpoint back: header plus named tensors in manifest order.
pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<(String, RealTensor)>)> {
    let hp = path.with_extension("json");
    if !hp.exists() {
        return Err(Error::MissingArtifact(format!("{}", hp.display())));
    }
    let header: CheckpointHeader = serde_json::from_slice(&fs::read(&hp)?)?;
    if header.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint schema version {}",
            header.schema_version
        )));
    }
    let bytes = fs::read(path.with_extension("weights"))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("weight blob length not a multiple of 8".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut tensors = Vec::new();
    for e in &header.tensors {
        if e.offset + e.len > values.len() {
            return Err(Error::Format(format!(
                "tensor {} extends past the weight blob",
                e.name
            )));
        }
        let t = RealTensor::new(e.shape.clone(), values[e.offset..e.offset + e.len].to_vec())?;
        tensors.push((e.name.clone(), t));
    }
    Ok((header, tensors))
}
