//! The `.frgn` model container.
//!
//! Little-endian throughout:
//!
//! ```text
//! "FRGN"  u32 version
//! config: u32 x 10 (cond_hidden, cond_sub_dim, sub_hidden, sub_layers,
//!         subframe_len, frame_subframes, feature_dim, embed_dim,
//!         pitch_min, pitch_max), u8 embedding_kind, u8 precision, u16 0
//! u32 tensor_count
//! directory, per tensor: u16 name_len, name (UTF-8), u8 dtype, u8 ndim,
//!         u32 dims[ndim], u64 scale_offset, u64 payload_offset, u64 payload_len
//! u64 region_len  u32 crc32(region)
//! region: per tensor, f32 row scales (int8 only) then payload
//! ```
//!
//! Offsets are relative to the start of the region. `f32` tensors store
//! `u64::MAX` as their scale offset.

use super::{DType, EmbeddingKind, Model, ModelConfig, Precision, TensorRecord};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FRGN";
pub const FORMAT_VERSION: u32 = 1;
const NO_SCALES: u64 = u64::MAX;

/// Serializes a model. The output is canonical: equal models give equal bytes.
pub fn save_model(model: &Model) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    for v in [
        c.cond_hidden,
        c.cond_sub_dim,
        c.sub_hidden,
        c.sub_layers,
        c.subframe_len,
        c.frame_subframes,
        c.feature_dim,
        c.embed_dim,
        c.pitch_min,
        c.pitch_max,
    ] {
        put_u32(&mut out, v as u32);
    }
    out.push(match c.embedding_kind {
        EmbeddingKind::FixedSinusoidal => 0,
        EmbeddingKind::LearnedTable => 1,
    });
    out.push(match model.precision() {
        Precision::Float => 0,
        Precision::Int8 => 1,
    });
    out.extend_from_slice(&0u16.to_le_bytes());
    put_u32(&mut out, model.tensors().len() as u32);

    let mut region = Vec::new();
    for t in model.tensors() {
        let scale_offset = if t.dtype == DType::I8 {
            let off = region.len() as u64;
            for s in &t.scales {
                region.extend_from_slice(&s.to_le_bytes());
            }
            off
        } else {
            NO_SCALES
        };
        let payload_offset = region.len() as u64;
        region.extend_from_slice(&t.payload);

        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(match t.dtype {
            DType::F32 => 0,
            DType::I8 => 1,
        });
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            put_u32(&mut out, d as u32);
        }
        out.extend_from_slice(&scale_offset.to_le_bytes());
        out.extend_from_slice(&payload_offset.to_le_bytes());
        out.extend_from_slice(&(t.payload.len() as u64).to_le_bytes());
    }
    out.extend_from_slice(&(region.len() as u64).to_le_bytes());
    put_u32(&mut out, crc32fast::hash(&region));
    out.extend_from_slice(&region);
    out
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

struct DirEntry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    scale_offset: u64,
    payload_offset: u64,
    payload_len: u64,
}

/// Parses and validates a container.
pub fn load_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let mut dims = [0usize; 10];
    for d in dims.iter_mut() {
        *d = r.u32("config block")? as usize;
    }
    let embedding_kind = match r.u8("config block")? {
        0 => EmbeddingKind::FixedSinusoidal,
        1 => EmbeddingKind::LearnedTable,
        k => return Err(Error::Malformed(format!("embedding kind {k}"))),
    };
    let precision = match r.u8("config block")? {
        0 => Precision::Float,
        1 => Precision::Int8,
        p => return Err(Error::Malformed(format!("precision code {p}"))),
    };
    if r.u16("config block")? != 0 {
        return Err(Error::Malformed("reserved config field is not zero".into()));
    }
    let config = ModelConfig {
        cond_hidden: dims[0],
        cond_sub_dim: dims[1],
        sub_hidden: dims[2],
        sub_layers: dims[3],
        subframe_len: dims[4],
        frame_subframes: dims[5],
        feature_dim: dims[6],
        embed_dim: dims[7],
        pitch_min: dims[8],
        pitch_max: dims[9],
        embedding_kind,
    };
    config.validate()?;

    let count = r.u32("tensor count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = r.u16("tensor name")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::Malformed("tensor name is not UTF-8".into()))?
            .to_owned();
        let dtype = match r.u8("tensor dtype")? {
            0 => DType::F32,
            1 => DType::I8,
            d => return Err(Error::Malformed(format!("{name}: dtype code {d}"))),
        };
        let ndim = r.u8("tensor rank")? as usize;
        let shape = (0..ndim)
            .map(|_| r.u32("tensor shape").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        entries.push(DirEntry {
            name,
            dtype,
            shape,
            scale_offset: r.u64("tensor directory")?,
            payload_offset: r.u64("tensor directory")?,
            payload_len: r.u64("tensor directory")?,
        });
    }

    let region_len = r.u64("region length")?;
    let stored = r.u32("checksum")?;
    let region_start = r.pos;
    let available = (bytes.len() - region_start) as u64;
    if available < region_len {
        return Err(Error::Truncated("tensor payload region"));
    }
    if available > region_len {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after payload region",
            available - region_len
        )));
    }
    let region = &bytes[region_start..];
    let computed = crc32fast::hash(region);
    if computed != stored {
        return Err(Error::Checksum { stored, computed });
    }

    let slice = |off: u64, len: u64, name: &str| -> Result<&[u8]> {
        off.checked_add(len)
            .filter(|&end| end <= region_len)
            .map(|end| &region[off as usize..end as usize])
            .ok_or_else(|| Error::Malformed(format!("{name}: data outside payload region")))
    };
    let mut tensors = Vec::with_capacity(entries.len());
    for e in entries {
        let numel: u64 = e.shape.iter().map(|&d| d as u64).product();
        if e.payload_len != numel * e.dtype.size() as u64 {
            return Err(Error::Malformed(format!(
                "{}: payload length {} does not match shape {:?}",
                e.name, e.payload_len, e.shape
            )));
        }
        let payload = slice(e.payload_offset, e.payload_len, &e.name)?.to_vec();
        let scales = match e.dtype {
            DType::F32 => {
                if e.scale_offset != NO_SCALES {
                    return Err(Error::Malformed(format!("{}: f32 tensor with scales", e.name)));
                }
                Vec::new()
            }
            DType::I8 => {
                let rows = e.shape.first().copied().unwrap_or(1) as u64;
                slice(e.scale_offset, rows * 4, &e.name)?
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect()
            }
        };
        tensors.push(TensorRecord {
            name: e.name,
            dtype: e.dtype,
            shape: e.shape,
            scales,
            payload,
        });
    }
    Model::new(config, precision, tensors)
}
