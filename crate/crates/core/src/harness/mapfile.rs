use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

pub const MAP_MAGIC: &[u8; 4] = b"BLRM";
const HEADER_LEN: usize = 16;

/// `"BLRM"`, then `C`, `H`, `W` as little-endian u32, then `C*H*W`
/// little-endian f32 values in channel, row, column order.
pub fn encode_map(map: &FeatureMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.data().len());
    out.extend_from_slice(MAP_MAGIC);
    for d in map.shape() {
        let d =
            u32::try_from(d).map_err(|_| Error::Argument(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in map.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_map(bytes: &[u8]) -> Result<FeatureMap> {
    let format = |offset: usize, message: &str| Error::Format {
        offset: offset as u64,
        message: message.into(),
    };
    if bytes.len() < 4 || &bytes[..4] != MAP_MAGIC {
        return Err(format(0, "bad magic, expected BLRM"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(format(bytes.len(), "truncated header"));
    }
    let dim = |k: usize| {
        let o = 4 + 4 * k;
        u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize
    };
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let n = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| format(4, "dimensions overflow"))?;
    let want = n
        .checked_mul(4)
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| format(4, "dimensions overflow"))?;
    if bytes.len() < want {
        let complete = (bytes.len() - HEADER_LEN) / 4;
        return Err(format(HEADER_LEN + 4 * complete, "truncated payload"));
    }
    if bytes.len() > want {
        return Err(format(want, "trailing bytes"));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    FeatureMap::from_vec(c, h, w, data)
}

pub fn write_map(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_map(map)?).map_err(|e| Error::io(path, e))
}

pub fn read_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let path = path.as_ref();
    decode_map(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
