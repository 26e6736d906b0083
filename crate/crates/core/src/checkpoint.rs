//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `DRSN`, format version `u16`, array count
//! `u32`, then per array: name length `u16`, UTF-8 name, dtype `u8`
//! (0 = f64, 1 = f32), rank `u8`, extents as `u32`, raw values. A CRC32 of
//! every preceding byte closes the file. Arrays are written in name order, so
//! equal parameters always give equal bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::{Float, Tensor};

pub const MAGIC: &[u8; 4] = b"DRSN";
pub const FORMAT_VERSION: u16 = 1;

const DTYPE_F64: u8 = 0;
const DTYPE_F32: u8 = 1;

#[cfg(not(feature = "f32"))]
const NATIVE_DTYPE: u8 = DTYPE_F64;
#[cfg(feature = "f32")]
const NATIVE_DTYPE: u8 = DTYPE_F32;

pub fn encode(params: &ModelParams) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + params.num_scalars() * std::mem::size_of::<Float>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, tensor) in params.iter() {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Checkpoint(format!("array name too long: {name}")))?;
        let rank = u8::try_from(tensor.shape().len())
            .map_err(|_| Error::Checkpoint(format!("rank of {name} exceeds 255")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(NATIVE_DTYPE);
        out.push(rank);
        for &d in tensor.shape() {
            let d = u32::try_from(d).map_err(|_| Error::Checkpoint(format!("extent of {name} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let slice = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos)))?;
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses checkpoint bytes, verifying magic, CRC and version. Values stored
/// in the other precision are converted.
pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < MAGIC.len() + 2 + 4 + 4 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("missing DRSN magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Crc { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = r.u32("array count")?;
    let mut params = ModelParams::new();
    for _ in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Checkpoint("array name is not UTF-8".into()))?
            .to_string();
        let dtype = r.u8("dtype")?;
        let rank = r.u8("rank")? as usize;
        let shape = (0..rank)
            .map(|_| r.u32("extent").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let data: Vec<Float> = match dtype {
            DTYPE_F64 => r
                .take(len * 8, &name)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()) as Float)
                .collect(),
            DTYPE_F32 => r
                .take(len * 4, &name)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as Float)
                .collect(),
            other => return Err(Error::Checkpoint(format!("array {name} has unknown dtype code {other}"))),
        };
        if params.get(&name).is_some() {
            return Err(Error::Checkpoint(format!("duplicate array {name}")));
        }
        params.insert(name, Tensor::new(&shape, data)?);
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes before the CRC", body.len() - r.pos)));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let bytes = encode(params)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint and checks that it holds exactly the arrays `config` needs.
pub fn load_checkpoint(path: &Path, config: &ModelConfig) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let params = decode(&bytes)?;
    params.check_inventory(config)?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::init_params;

    fn small() -> (ModelConfig, ModelParams) {
        let cfg = ModelConfig::with_width(16, 16, 0.5);
        let p = init_params(&cfg, 3);
        (cfg, p)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (cfg, p) = small();
        let bytes = encode(&p).unwrap();
        let back = decode(&bytes).unwrap();
        back.check_inventory(&cfg).unwrap();
        assert_eq!(back, p);
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn flipped_byte_fails_crc() {
        let (_, p) = small();
        let mut bytes = encode(&p).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        assert!(matches!(decode(&bytes), Err(Error::Crc { .. })));
    }

    fn reseal(mut body: Vec<u8>) -> Vec<u8> {
        let crc = crc32fast::hash(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        body
    }

    #[test]
    fn other_version_asks_for_upgrade() {
        let (_, p) = small();
        let mut bytes = encode(&p).unwrap();
        bytes.truncate(bytes.len() - 4);
        bytes[4..6].copy_from_slice(&7u16.to_le_bytes());
        let err = decode(&reseal(bytes)).unwrap_err();
        assert!(matches!(err, Error::Version { found: 7, expected: 1 }));
        assert!(err.to_string().contains("re-save"));
    }

    #[test]
    fn inventory_errors_name_the_array() {
        let (cfg, mut p) = small();
        p.insert("zzz.extra", Tensor::zeros(&[2]));
        let back = decode(&encode(&p).unwrap()).unwrap();
        match back.check_inventory(&cfg) {
            Err(Error::UnknownArray(name)) => assert_eq!(name, "zzz.extra"),
            other => panic!("{other:?}"),
        }
        let (cfg, p) = small();
        let mut trimmed = ModelParams::new();
        for (n, t) in p.iter().filter(|(n, _)| n.as_str() != "head.b") {
            trimmed.insert(n.clone(), t.clone());
        }
        match trimmed.check_inventory(&cfg) {
            Err(Error::MissingArray(name)) => assert_eq!(name, "head.b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncation_and_garbage_are_rejected() {
        let (_, p) = small();
        let bytes = encode(&p).unwrap();
        assert!(decode(&bytes[..10]).is_err());
        assert!(decode(b"NOPE....").is_err());
    }
}
