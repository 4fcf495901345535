//! Single-file checkpoints.
//!
//! Layout: the 8-byte magic `RCDCKPT1`, a little-endian `u64` header
//! length, the JSON [`CheckpointHeader`], then every tensor as raw
//! little-endian float32 values. Each manifest entry gives the tensor's
//! name, shape, kind and byte offset from the start of the blob section.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Detector, ModelSpec};
use crate::error::{Error, Result};
use crate::params::ParamKind;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"RCDCKPT1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    EndToEnd,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Pretrain => "pretrain",
            Stage::EndToEnd => "end_to_end",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub spec: ModelSpec,
    pub seed: u64,
    pub stage: Stage,
    pub epoch: usize,
    pub val_accuracy: Option<f64>,
    pub tensors: Vec<TensorRecord>,
}

/// Training position recorded alongside the weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub stage: Stage,
    pub epoch: usize,
    pub val_accuracy: Option<f64>,
}

pub fn save(path: &Path, model: &Detector<f32>, meta: CheckpointMeta) -> Result<()> {
    let mut tensors = Vec::new();
    let mut blob = Vec::new();
    for (_, e) in model.store().entries() {
        tensors.push(TensorRecord {
            name: e.name.clone(),
            shape: e.value.shape().to_vec(),
            kind: e.kind,
            offset: blob.len() as u64,
        });
        for v in e.value.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = CheckpointHeader {
        spec: model.spec().clone(),
        seed: model.seed(),
        stage: meta.stage,
        epoch: meta.epoch,
        val_accuracy: meta.val_accuracy,
        tensors,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::json("checkpoint header", e))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("ckpt.tmp");
    let mut file = std::io::BufWriter::new(fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?);
    let write = |f: &mut std::io::BufWriter<fs::File>, bytes: &[u8]| f.write_all(bytes).map_err(|e| Error::io(&tmp, e));
    write(&mut file, MAGIC)?;
    write(&mut file, &(json.len() as u64).to_le_bytes())?;
    write(&mut file, &json)?;
    write(&mut file, &blob)?;
    file.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn split_file(path: &Path, bytes: &[u8]) -> Result<(CheckpointHeader, usize)> {
    let bad = |reason: &str| Error::Load {
        what: format!("checkpoint {}", path.display()),
        reason: reason.to_string(),
    };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing checkpoint magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let end = 16usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..end])
        .map_err(|e| Error::json(format!("checkpoint {}", path.display()), e))?;
    Ok((header, end))
}

pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    split_file(path, &bytes).map(|(h, _)| h)
}

pub type NamedTensors = Vec<(String, Tensor<f32>)>;

/// Named tensors stored in a checkpoint.
pub fn read_tensors(path: &Path) -> Result<(CheckpointHeader, NamedTensors)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, start) = split_file(path, &bytes)?;
    let blob = &bytes[start..];
    let mut out = Vec::with_capacity(header.tensors.len());
    for rec in &header.tensors {
        let numel: usize = rec.shape.iter().product();
        let from = rec.offset as usize;
        let to = from + numel * 4;
        if to > blob.len() {
            return Err(Error::Load {
                what: format!("checkpoint {}", path.display()),
                reason: format!("tensor {} extends past the end of the file", rec.name),
            });
        }
        let data = blob[from..to]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((rec.name.clone(), Tensor::from_vec(&rec.shape, data)));
    }
    Ok((header, out))
}

/// Rebuilds the detector recorded in `path` with its saved weights.
pub fn load(path: &Path) -> Result<(Detector<f32>, CheckpointHeader)> {
    let (header, tensors) = read_tensors(path)?;
    let mut model = Detector::new(&header.spec, header.seed)?;
    let expected = model.store().len();
    if tensors.len() != expected {
        return Err(Error::Load {
            what: format!("checkpoint {}", path.display()),
            reason: format!("{} tensors stored, model has {expected}", tensors.len()),
        });
    }
    copy_tensors(&mut model, &tensors, |_| true)?;
    Ok((model, header))
}

/// Overwrites every model tensor whose name passes `filter` with the
/// stored value. All selected model tensors must be present with
/// matching shapes. Returns the number of tensors copied.
pub fn copy_tensors(
    model: &mut Detector<f32>,
    tensors: &[(String, Tensor<f32>)],
    filter: impl Fn(&str) -> bool,
) -> Result<usize> {
    let by_name: std::collections::HashMap<&str, &Tensor<f32>> = tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let wanted: Vec<(crate::params::ParamId, String)> = model
        .store()
        .entries()
        .filter(|(_, e)| filter(&e.name))
        .map(|(id, e)| (id, e.name.clone()))
        .collect();
    for (id, name) in &wanted {
        let src = by_name
            .get(name.as_str())
            .ok_or_else(|| Error::Config(format!("checkpoint has no tensor {name}")))?;
        let dst = model.store_mut().get_mut(*id);
        if dst.shape() != src.shape() {
            return Err(Error::Config(format!(
                "tensor {name}: checkpoint shape {:?}, model shape {:?}",
                src.shape(),
                dst.shape()
            )));
        }
        dst.data_mut().copy_from_slice(src.data());
    }
    Ok(wanted.len())
}
