//! On-disk containers for trained models (`.bsm`) and encoded images (`.bsi`).
//!
//! Both share one framing:
//!
//! ```text
//!   magic (8 bytes) | manifest length (u64 LE) | JSON manifest | payload
//! ```
//!
//! Manifest offsets are relative to the start of the payload and every
//! multi-byte value in the payload is little-endian.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use half::f16;
use serde::{Deserialize, Serialize};

use crate::bitcodec::{FloatLayout, StorageFloat};
use crate::error::{Error, Result};
use crate::evalharness::TinyModel;
use crate::schemes::{MemoryImage, SchemeConfig, TensorDescriptor};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 8] = b"BSHLDMDL";
pub const IMAGE_MAGIC: &[u8; 8] = b"BSHLDIMG";
pub const FORMAT_VERSION: u32 = 1;

/// Refuse manifests larger than this; real ones are a few kilobytes.
const MAX_MANIFEST_BYTES: u64 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: FloatLayout,
    pub byte_offset: u64,
    pub element_count: u64,
}

/// Provenance recorded alongside a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hidden: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_accuracy: Option<f64>,
    #[serde(default, flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub metadata: ModelMetadata,
}

/// A model in whichever precision the file stores.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Fp32(TinyModel<f32>),
    Fp16(TinyModel<f16>),
}

impl StoredModel {
    pub fn layout(&self) -> FloatLayout {
        match self {
            StoredModel::Fp32(_) => FloatLayout::FP32,
            StoredModel::Fp16(_) => FloatLayout::FP16,
        }
    }

    pub fn to_fp32(&self) -> TinyModel<f32> {
        match self {
            StoredModel::Fp32(m) => m.clone(),
            StoredModel::Fp16(m) => m.cast(),
        }
    }

    pub fn to_fp16(&self) -> TinyModel<f16> {
        match self {
            StoredModel::Fp32(m) => m.cast(),
            StoredModel::Fp16(m) => m.clone(),
        }
    }
}

fn write_frame(mut w: impl Write, magic: &[u8; 8], manifest: &[u8], payload: &[u8]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&(manifest.len() as u64).to_le_bytes())?;
    w.write_all(manifest)?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

fn read_frame(mut r: impl Read, magic: &[u8; 8]) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)
        .map_err(|_| Error::Container("file too short for a container header".into()))?;
    if &head[..8] != magic {
        return Err(Error::Container(format!(
            "bad magic, expected {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let len = u64::from_le_bytes(head[8..].try_into().expect("8 bytes"));
    if len > MAX_MANIFEST_BYTES {
        return Err(Error::Container(format!("manifest length {len} is implausible")));
    }
    let mut manifest = vec![0u8; len as usize];
    r.read_exact(&mut manifest)
        .map_err(|_| Error::Container("truncated manifest".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    Ok((manifest, payload))
}

fn model_payload<T: StorageFloat>(model: &TinyModel<T>) -> (Vec<TensorEntry>, Vec<u8>) {
    let bytes = (T::LAYOUT.total_bits() / 8) as usize;
    let mut entries = Vec::new();
    let mut payload = Vec::new();
    for t in model.tensors() {
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            dtype: T::LAYOUT,
            byte_offset: payload.len() as u64,
            element_count: t.data.len() as u64,
        });
        for v in &t.data {
            payload.extend_from_slice(&v.to_pattern().to_le_bytes()[..bytes]);
        }
    }
    (entries, payload)
}

pub fn write_model<T: StorageFloat>(w: impl Write, model: &TinyModel<T>, metadata: &ModelMetadata) -> Result<()> {
    let (tensors, payload) = model_payload(model);
    let manifest = ModelManifest {
        format_version: FORMAT_VERSION,
        tensors,
        metadata: metadata.clone(),
    };
    write_frame(w, MODEL_MAGIC, &serde_json::to_vec(&manifest)?, &payload)
}

fn decode_tensors<T: StorageFloat>(entries: &[TensorEntry], payload: &[u8]) -> Result<Vec<Tensor<T>>> {
    let bytes = (T::LAYOUT.total_bits() / 8) as usize;
    let mut expected_offset = 0u64;
    entries
        .iter()
        .map(|e| {
            if e.dtype != T::LAYOUT {
                return Err(Error::ManifestMismatch(format!(
                    "tensor `{}` is {}, model is {}",
                    e.name,
                    e.dtype,
                    T::LAYOUT
                )));
            }
            if e.shape.iter().product::<usize>() as u64 != e.element_count {
                return Err(Error::ManifestMismatch(format!(
                    "tensor `{}` shape {:?} disagrees with element count {}",
                    e.name, e.shape, e.element_count
                )));
            }
            if e.byte_offset != expected_offset {
                return Err(Error::ManifestMismatch(format!(
                    "tensor `{}` starts at byte {}, expected {expected_offset}",
                    e.name, e.byte_offset
                )));
            }
            let len = e.element_count * bytes as u64;
            expected_offset += len;
            let raw = payload
                .get(e.byte_offset as usize..expected_offset as usize)
                .ok_or_else(|| Error::Container(format!("payload ends inside tensor `{}`", e.name)))?;
            let data = raw
                .chunks_exact(bytes)
                .map(|c| {
                    let mut b = [0u8; 4];
                    b[..bytes].copy_from_slice(c);
                    T::from_pattern(u32::from_le_bytes(b))
                })
                .collect();
            Ok(Tensor::new(e.name.clone(), e.shape.clone(), data))
        })
        .collect::<Result<Vec<_>>>()
        .and_then(|t| {
            if expected_offset != payload.len() as u64 {
                return Err(Error::Container(format!(
                    "payload holds {} bytes, manifest accounts for {expected_offset}",
                    payload.len()
                )));
            }
            Ok(t)
        })
}

pub fn read_model(r: impl Read) -> Result<(StoredModel, ModelManifest)> {
    let (manifest, payload) = read_frame(r, MODEL_MAGIC)?;
    let manifest: ModelManifest = serde_json::from_slice(&manifest)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Container(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let dtype = manifest
        .tensors
        .first()
        .map(|t| t.dtype)
        .ok_or_else(|| Error::ManifestMismatch("model has no tensors".into()))?;
    let model = match dtype.total_bits() {
        32 => StoredModel::Fp32(TinyModel::from_tensors(decode_tensors(&manifest.tensors, &payload)?)?),
        _ => StoredModel::Fp16(TinyModel::from_tensors(decode_tensors(&manifest.tensors, &payload)?)?),
    };
    Ok((model, manifest))
}

pub fn save_model<T: StorageFloat>(
    path: impl AsRef<Path>,
    model: &TinyModel<T>,
    metadata: &ModelMetadata,
) -> Result<()> {
    write_model(BufWriter::new(File::create(path)?), model, metadata)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(StoredModel, ModelManifest)> {
    read_model(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageManifest {
    pub format_version: u32,
    pub dtype: FloatLayout,
    pub scheme: SchemeConfig,
    pub line_count: u64,
    pub tensors: Vec<TensorDescriptor>,
    pub lines_offset: u64,
    pub line_bytes: u64,
    /// Zero when the scheme has no SECDED sidecar.
    pub check_offset: u64,
    pub check_bytes: u64,
}

pub fn write_image(w: impl Write, image: &MemoryImage) -> Result<()> {
    image.validate()?;
    let line_bytes = (image.scheme.line_width / 8) as usize;
    let mut payload = Vec::with_capacity(image.lines.len() * (line_bytes + 2));
    for &l in &image.lines {
        payload.extend_from_slice(&l.to_le_bytes()[..line_bytes]);
    }
    let check_offset = payload.len() as u64;
    if let Some(checks) = &image.check_bits {
        for &c in checks {
            payload.extend_from_slice(&c.to_le_bytes());
        }
    }
    let manifest = ImageManifest {
        format_version: FORMAT_VERSION,
        dtype: image.layout,
        scheme: image.scheme,
        line_count: image.lines.len() as u64,
        tensors: image.manifest.clone(),
        lines_offset: 0,
        line_bytes: line_bytes as u64,
        check_offset: if image.check_bits.is_some() { check_offset } else { 0 },
        check_bytes: if image.check_bits.is_some() { 2 } else { 0 },
    };
    write_frame(w, IMAGE_MAGIC, &serde_json::to_vec(&manifest)?, &payload)
}

pub fn read_image(r: impl Read) -> Result<MemoryImage> {
    let (manifest, payload) = read_frame(r, IMAGE_MAGIC)?;
    let m: ImageManifest = serde_json::from_slice(&manifest)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Container(format!(
            "unsupported format version {}",
            m.format_version
        )));
    }
    m.scheme.validate(m.dtype)?;
    let line_bytes = (m.scheme.line_width / 8) as u64;
    if m.line_bytes != line_bytes || m.lines_offset != 0 {
        return Err(Error::ManifestMismatch(
            "line geometry disagrees with the scheme".into(),
        ));
    }
    let lines_end = m.line_count * line_bytes;
    let secded = m.scheme.kind.has_secded();
    let expected = lines_end + if secded { m.line_count * 2 } else { 0 };
    if payload.len() as u64 != expected || (secded && (m.check_offset != lines_end || m.check_bytes != 2)) {
        return Err(Error::Container(format!(
            "payload holds {} bytes, manifest implies {expected}",
            payload.len()
        )));
    }
    let lines = payload[..lines_end as usize]
        .chunks_exact(line_bytes as usize)
        .map(|c| {
            let mut b = [0u8; 16];
            b[..c.len()].copy_from_slice(c);
            u128::from_le_bytes(b)
        })
        .collect();
    let check_bits = secded.then(|| {
        payload[lines_end as usize..]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect()
    });
    let image = MemoryImage {
        layout: m.dtype,
        scheme: m.scheme,
        lines,
        check_bits,
        manifest: m.tensors,
    };
    image.validate()?;
    Ok(image)
}

pub fn save_image(path: impl AsRef<Path>, image: &MemoryImage) -> Result<()> {
    write_image(BufWriter::new(File::create(path)?), image)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<MemoryImage> {
    read_image(BufReader::new(File::open(path)?))
}
