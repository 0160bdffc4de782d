//! `SRNW` named-tensor container.
//!
//! Layout, all integers little-endian:
//! `"SRNW" | version u32 | count u32 | { name_len u16 | name | rank u8 |
//! dims u32* | f32* }* | crc32 u32`, the CRC covering every preceding byte.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::model::{SpecRNet, SpecRNetConfig};
use crate::{Error, Result, Tensor};

pub const MAGIC: &[u8; 4] = b"SRNW";
pub const VERSION: u32 = 1;
/// Name of the tensor holding the encoded [`SpecRNetConfig`].
pub const CONFIG_TENSOR: &str = "config";

pub type NamedTensor = (String, Tensor<f32>);

pub fn encode(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + tensors.iter().map(|(n, t)| 8 + n.len() + 4 * t.len()).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(tensors.len()).map_err(|_| Error::InvalidConfig("too many tensors".into()))?.to_le_bytes());
    for (name, t) in tensors {
        let len = u16::try_from(name.len()).map_err(|_| Error::InvalidConfig(format!("tensor name too long: {name}")))?;
        let rank = u8::try_from(t.shape().len()).map_err(|_| Error::InvalidConfig(format!("rank too high: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::InvalidConfig(format!("dimension too large: {name}")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::CorruptContainer(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    if bytes.len() < 16 {
        return Err(Error::CorruptContainer(format!("only {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::CorruptContainer("bad magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let version = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::CorruptContainer("checksum mismatch".into()));
    }
    if version != VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let mut r = Reader { buf: body, pos: 8 };
    let count = r.u32()? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = core::str::from_utf8(r.take(len)?).map_err(|_| Error::CorruptContainer("name is not UTF-8".into()))?;
        let rank = r.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::CorruptContainer(format!("{name}: dimensions overflow")))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::CorruptContainer("size overflow".into()))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        out.push((String::from(name), Tensor::from_vec(&shape, data)?));
    }
    if r.pos != body.len() {
        return Err(Error::CorruptContainer(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(out)
}

/// Config first, then every parameter and running statistic.
pub fn model_tensors(model: &SpecRNet<f32>) -> Vec<NamedTensor> {
    let cfg = model.config().to_values();
    let mut out = alloc::vec![(String::from(CONFIG_TENSOR), Tensor::from_vec(&[cfg.len()], cfg).expect("flat"))];
    out.extend(model.named_state().into_iter().map(|(n, t)| (n, t.clone())));
    out
}

pub fn encode_model(model: &SpecRNet<f32>) -> Result<Vec<u8>> {
    encode(&model_tensors(model))
}

/// Rebuilds a model from a tensor set, which must name every parameter and
/// running statistic exactly once and nothing else.
pub fn model_from_tensors(tensors: Vec<NamedTensor>) -> Result<SpecRNet<f32>> {
    let mut config = None;
    let mut rest = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        if name == CONFIG_TENSOR {
            if config.is_some() {
                return Err(Error::CountMismatch("duplicate config tensor".into()));
            }
            config = Some(SpecRNetConfig::from_values(t.data())?);
        } else {
            rest.push((name, t));
        }
    }
    let config = config.ok_or_else(|| Error::CountMismatch("missing config tensor".into()))?;
    let mut model = SpecRNet::build(config, 0);
    let expected: usize = model.named_state().len();
    let mut seen = BTreeSet::new();
    let mut trainable = 0usize;
    let trainable_names: BTreeSet<String> = model.params().iter().filter(|p| p.trainable).map(|p| p.name.clone()).collect();
    for (name, t) in rest {
        if !seen.insert(name.clone()) {
            return Err(Error::CountMismatch(format!("duplicate tensor {name}")));
        }
        if trainable_names.contains(&name) {
            trainable += t.len();
        }
        if !model.set_state(&name, t)? {
            return Err(Error::CountMismatch(format!("unexpected tensor {name}")));
        }
    }
    if seen.len() != expected {
        return Err(Error::CountMismatch(format!("{} of {expected} tensors present", seen.len())));
    }
    if trainable != model.count_parameters() {
        return Err(Error::CountMismatch(format!("{trainable} trainable values")));
    }
    if config == SpecRNetConfig::default() && trainable != crate::model::SPECRNET_PARAMETERS {
        return Err(Error::CountMismatch(format!("{trainable} parameters")));
    }
    Ok(model)
}

pub fn decode_model(bytes: &[u8]) -> Result<SpecRNet<f32>> {
    model_from_tensors(decode(bytes)?)
}
