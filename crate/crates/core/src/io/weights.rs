//! Binary checkpoint format.
//!
//! ```text
//! "IDFW"  version:u32  count:u32
//! count × { name_len:u16  name  rank:u8  dims:u32×rank  f32×Πdims }
//! crc32:u32   (over every preceding byte)
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use crate::error::{IdfError, Result};
use crate::model::{ModelConfig, ModelWeights, TENSOR_NAMES};
use crate::tensor::Tensor;

pub const WEIGHT_MAGIC: &[u8; 4] = b"IDFW";
pub const WEIGHT_VERSION: u32 = 1;

pub fn encode_weights(w: &ModelWeights) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
    out.extend_from_slice(&(TENSOR_NAMES.len() as u32).to_le_bytes());
    for (name, t) in TENSOR_NAMES.iter().zip(w.tensors()) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(IdfError::WeightFormat("truncated file".into()));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint into named tensors, in file order, after checking
/// magic, CRC and version.
pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if bytes.len() < 16 {
        return Err(IdfError::WeightFormat("file too short".into()));
    }
    if &bytes[..4] != WEIGHT_MAGIC {
        return Err(IdfError::WeightFormat("bad magic".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(IdfError::Crc { stored, computed });
    }
    let mut cur = Cursor { bytes: body, at: 4 };
    let version = cur.u32()?;
    if version != WEIGHT_VERSION {
        return Err(IdfError::WeightFormat(format!(
            "unsupported version {version}"
        )));
    }
    let count = cur.u32()? as usize;
    let mut out: Vec<(String, Tensor)> = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| IdfError::WeightFormat("tensor name is not UTF-8".into()))?
            .to_string();
        if out.iter().any(|(n, _)| *n == name) {
            return Err(IdfError::WeightFormat(format!("duplicate tensor `{name}`")));
        }
        let rank = cur.u8()? as usize;
        let dims = (0..rank)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let raw = cur
            .take(n.checked_mul(4).ok_or_else(|| {
                IdfError::WeightFormat(format!("tensor `{name}` is too large"))
            })?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let t = Tensor::new(dims, data)
            .map_err(|e| IdfError::WeightFormat(format!("tensor `{name}`: {e}")))?;
        out.push((name, t));
    }
    if cur.at != body.len() {
        return Err(IdfError::WeightFormat(
            "trailing bytes after last tensor".into(),
        ));
    }
    Ok(out)
}

/// Architecture implied by the tensor shapes; `power` and `lcm_window` are
/// taken from `base`.
pub fn infer_config(tensors: &[(String, Tensor)], base: &ModelConfig) -> Result<ModelConfig> {
    let find = |name: &str| {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.dims())
            .ok_or_else(|| IdfError::WeightFormat(format!("missing tensor `{name}`")))
    };
    let fem = find("fem.conv1.w")?;
    let kpm = find("kpm.conv.w")?;
    if fem.len() != 4 || kpm.len() != 4 {
        return Err(IdfError::WeightFormat(
            "convolution weights must be rank 4".into(),
        ));
    }
    let k = (kpm[0] as f64).sqrt().round() as usize;
    if k * k != kpm[0] {
        return Err(IdfError::WeightFormat(format!(
            "kpm.conv.w has {} outputs, not a square kernel area",
            kpm[0]
        )));
    }
    Ok(ModelConfig {
        channels: fem[1],
        hidden_width: fem[0],
        kernel_size: k,
        ..*base
    })
}

/// Builds weights for `config`, requiring exactly the expected tensor names.
pub fn weights_from_tensors(
    tensors: Vec<(String, Tensor)>,
    config: ModelConfig,
) -> Result<ModelWeights> {
    if let Some((extra, _)) = tensors
        .iter()
        .find(|(n, _)| !TENSOR_NAMES.contains(&n.as_str()))
    {
        return Err(IdfError::WeightFormat(format!(
            "unexpected tensor `{extra}`"
        )));
    }
    let mut slots: Vec<Option<Tensor>> = vec![None; TENSOR_NAMES.len()];
    for (name, t) in tensors {
        let i = TENSOR_NAMES.iter().position(|n| *n == name).unwrap();
        slots[i] = Some(t);
    }
    let ordered = slots
        .into_iter()
        .zip(TENSOR_NAMES)
        .map(|(t, name)| {
            t.ok_or_else(|| IdfError::WeightFormat(format!("missing tensor `{name}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    ModelWeights::from_tensors(config, ordered)
}

pub fn save_weights(w: &ModelWeights, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| IdfError::io(parent, e))?;
    }
    std::fs::write(path, encode_weights(w)).map_err(|e| IdfError::io(path, e))
}

/// Loads a checkpoint and checks every tensor against `config`.
pub fn load_weights(path: &Path, config: &ModelConfig) -> Result<ModelWeights> {
    let bytes = std::fs::read(path).map_err(|e| IdfError::io(path, e))?;
    weights_from_tensors(decode_tensors(&bytes)?, *config)
}

/// Loads a checkpoint, taking the architecture from the file itself.
pub fn load_weights_inferred(path: &Path, base: &ModelConfig) -> Result<ModelWeights> {
    let bytes = std::fs::read(path).map_err(|e| IdfError::io(path, e))?;
    let tensors = decode_tensors(&bytes)?;
    let config = infer_config(&tensors, base)?;
    weights_from_tensors(tensors, config)
}
