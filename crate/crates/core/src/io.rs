//! Binary tensor records and checkpoints.
//!
//! A tensor record is `b"RC3D"`, the format version (`u32` LE), the rank
//! (`u32` LE), one `u32` LE per extent, then the payload as `f32` LE in
//! row-major order. A checkpoint is one blob of concatenated records plus a
//! JSON manifest giving each parameter's name, byte offset and shape.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::{Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"RC3D";
pub const FORMAT_VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_tensor<T: Scalar, W: Write>(out: &mut W, t: &Tensor<T>) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| format_err(format!("extent {d} exceeds u32")))?;
        out.write_all(&d.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.numel() * 4);
    for v in t.data() {
        let f = v.to_f32().unwrap_or(f32::NAN);
        buf.extend_from_slice(&f.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn tensor_to_bytes<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut v = Vec::with_capacity(12 + 4 * t.rank() + 4 * t.numel());
    write_tensor(&mut v, t).expect("writing to a Vec cannot fail");
    v
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_tensor<T: Scalar, R: Read>(r: &mut R) -> Result<Tensor<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(format_err(format!("bad magic {magic:?}")));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported tensor format version {version}")));
    }
    let rank = read_u32(r)? as usize;
    if rank == 0 || rank > 16 {
        return Err(format_err(format!("implausible rank {rank}")));
    }
    let shape = (0..rank).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    Tensor::new(&shape, data).map_err(|e| format_err(e.to_string()))
}

pub fn save_tensor<T: Scalar>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    fs::write(path, tensor_to_bytes(t))?;
    Ok(())
}

pub fn load_tensor<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let bytes = fs::read(path)?;
    read_tensor(&mut bytes.as_slice())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub offset: u64,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub blob: String,
    pub entries: Vec<ManifestEntry>,
}

/// Writes `<dir>/<stem>.bin` and `<dir>/<stem>.json`; returns the manifest path.
pub fn save_checkpoint<T: Scalar>(store: &ParamStore<T>, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let blob_name = format!("{stem}.bin");
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(store.len());
    for (_, p) in store.iter() {
        entries.push(ManifestEntry {
            name: p.name.clone(),
            offset: blob.len() as u64,
            shape: p.value.shape().to_vec(),
        });
        write_tensor(&mut blob, &p.value)?;
    }
    fs::write(dir.join(&blob_name), blob)?;
    let manifest = CheckpointManifest {
        format: "rc3d-checkpoint".into(),
        version: FORMAT_VERSION,
        blob: blob_name,
        entries,
    };
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest).map_err(|e| format_err(e.to_string()))? + "\n")?;
    Ok(path)
}

/// Reads every named tensor of a checkpoint, in manifest order.
pub fn read_checkpoint<T: Scalar>(manifest_path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<T>)>> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path)?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| format_err(format!("manifest: {e}")))?;
    if manifest.format != "rc3d-checkpoint" || manifest.version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported checkpoint {} v{}", manifest.format, manifest.version)));
    }
    let blob_path = manifest_path.parent().unwrap_or(Path::new(".")).join(&manifest.blob);
    let blob = fs::read(blob_path)?;
    manifest
        .entries
        .into_iter()
        .map(|e| {
            let start = usize::try_from(e.offset).map_err(|_| format_err("offset overflow"))?;
            let mut slice = blob.get(start..).ok_or_else(|| format_err(format!("offset {start} of {} past end of blob", e.name)))?;
            let t: Tensor<T> = read_tensor(&mut slice)?;
            if t.shape() != e.shape.as_slice() {
                return Err(format_err(format!("{}: record shape {:?} disagrees with manifest {:?}", e.name, t.shape(), e.shape)));
            }
            Ok((e.name, t))
        })
        .collect()
}

impl<T: Scalar> ParamStore<T> {
    /// Overwrites every parameter from a checkpoint; names and shapes must
    /// match exactly.
    pub fn load_checkpoint(&mut self, manifest_path: impl AsRef<Path>) -> Result<()> {
        let tensors = read_checkpoint::<T>(manifest_path)?;
        if tensors.len() != self.len() {
            return Err(Error::Config(format!(
                "checkpoint holds {} parameters, model expects {}",
                tensors.len(),
                self.len()
            )));
        }
        for (name, t) in tensors {
            let id = self
                .id(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint parameter {name:?} not present in model")))?;
            let dst = self.value_mut(id);
            if dst.shape() != t.shape() {
                return Err(Error::Config(format!(
                    "checkpoint parameter {name:?} has shape {:?}, model expects {:?}",
                    t.shape(),
                    dst.shape()
                )));
            }
            dst.data_mut().copy_from_slice(t.data());
        }
        Ok(())
    }
}
