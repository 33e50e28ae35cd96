use std::collections::BTreeMap;
use std::path::Path;

use super::network::{ArchDescriptor, NetworkParams};
use crate::data::write_atomic;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"UDC1";
pub const CHECKPOINT_VERSION: u16 = 1;
const VAR_FLOOR_KEY: &str = "meta.var_floor";
const SKIP_KEY: &str = "meta.skip";

/// Serializes parameters; tensors are written in name order, followed by
/// scalar entries carrying the variance floor and the skip flag.
pub fn encode_checkpoint(params: &NetworkParams) -> Vec<u8> {
    let floor = Tensor::scalar(params.arch().var_floor as f32);
    let skip = Tensor::scalar(if params.arch().skip { 1.0 } else { 0.0 });
    let mut entries: Vec<(&str, &Tensor)> = params.tensors().iter().map(|(k, v)| (k.as_str(), v)).collect();
    entries.push((VAR_FLOOR_KEY, &floor));
    entries.push((SKIP_KEY, &skip));
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn decode(bytes: &[u8]) -> std::result::Result<NetworkParams, String> {
    if bytes.len() < 14 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err("bad magic".into());
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err("checksum mismatch".into());
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let count = r.u32()?;
    let mut tensors = BTreeMap::new();
    let mut floor = None;
    let mut skip = None;
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| "tensor name is not utf-8")?.to_string();
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        let n: usize = dims.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or("tensor too large")?)?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let t = Tensor::new(dims, values).map_err(|e| format!("{name}: {e}"))?;
        if name == VAR_FLOOR_KEY {
            floor = Some(t.values().first().copied().ok_or("empty variance floor")? as f64);
        } else if name == SKIP_KEY {
            skip = Some(t.values().first().copied().ok_or("empty skip flag")? != 0.0);
        } else if tensors.insert(name.clone(), t).is_some() {
            return Err(format!("duplicate tensor {name}"));
        }
    }
    if r.pos != body.len() {
        return Err("trailing bytes".into());
    }
    let floor = floor.ok_or("missing variance floor")?;
    let skip = skip.ok_or("missing skip flag")?;
    let arch = ArchDescriptor::infer(&tensors, floor, skip).map_err(|e| e.to_string())?;
    NetworkParams::new(arch, tensors).map_err(|e| e.to_string())
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<NetworkParams> {
    decode(bytes).map_err(|reason| Error::corrupt(path, reason))
}

pub fn save_checkpoint(params: &NetworkParams, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(params))
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_identical() {
        let p = NetworkParams::init(ArchDescriptor::default(), 11).unwrap();
        let bytes = encode_checkpoint(&p);
        assert_eq!(&bytes[..4], b"UDC1");
        let back = decode_checkpoint(&bytes, Path::new("x")).unwrap();
        assert_eq!(back, p);
        assert_eq!(encode_checkpoint(&back), bytes);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.udc");
        save_checkpoint(&p, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);

        let arch = ArchDescriptor { skip: true, width: 4, body_layers: 1, ..ArchDescriptor::default() };
        let q = NetworkParams::init(arch, 2).unwrap();
        assert_eq!(decode_checkpoint(&encode_checkpoint(&q), Path::new("x")).unwrap(), q);
    }

    #[test]
    fn corruption_detected() {
        let p = NetworkParams::init(ArchDescriptor::default(), 11).unwrap();
        let mut bytes = encode_checkpoint(&p);
        bytes[100] ^= 1;
        assert!(matches!(decode_checkpoint(&bytes, Path::new("x")), Err(Error::Corrupt { .. })));
        let bytes = encode_checkpoint(&p);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 9], Path::new("x")).is_err());
        assert!(matches!(load_checkpoint(Path::new("/nonexistent/m.udc")), Err(Error::Io { .. })));
    }
}
