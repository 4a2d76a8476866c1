//! Binary depth grids: `DMAP`, u32 width, u32 height, f32 hole sentinel,
//! then `width * height` row-major f32 meters, all little endian.

use std::fs;
use std::path::Path;

use emergency_core::tracking::DepthMap;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"DMAP";
const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum DepthError {
    #[error("not a depth map (bad magic)")]
    BadMagic,
    #[error("depth map truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn decode_depth_map(bytes: &[u8]) -> Result<DepthMap, DepthError> {
    if bytes.len() < HEADER_LEN {
        return Err(DepthError::Truncated { expected: HEADER_LEN, found: bytes.len() });
    }
    if &bytes[..4] != MAGIC {
        return Err(DepthError::BadMagic);
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let width = u32::from_le_bytes(word(4)) as usize;
    let height = u32::from_le_bytes(word(8)) as usize;
    let hole = f32::from_le_bytes(word(12));
    let expected = HEADER_LEN + 4 * width * height;
    if bytes.len() != expected {
        return Err(DepthError::Truncated { expected, found: bytes.len() });
    }
    let values = bytes[HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok(DepthMap::new(width, height, hole, values).expect("length checked above"))
}

pub fn encode_depth_map(map: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(map.width as u32).to_le_bytes());
    out.extend_from_slice(&(map.height as u32).to_le_bytes());
    out.extend_from_slice(&map.hole.to_le_bytes());
    for v in &map.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_depth_map(path: &Path) -> Result<DepthMap, DepthError> {
    decode_depth_map(&fs::read(path)?)
}

pub fn write_depth_map(path: &Path, map: &DepthMap) -> Result<(), DepthError> {
    Ok(fs::write(path, encode_depth_map(map))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let map = DepthMap::new(3, 2, 0.0, vec![1.0, 2.0, 0.0, 4.5, 5.0, 6.25]).unwrap();
        let bytes = encode_depth_map(&map);
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(decode_depth_map(&bytes).unwrap(), map);
        assert!(matches!(decode_depth_map(&bytes[..20]), Err(DepthError::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_depth_map(&bad), Err(DepthError::BadMagic)));
    }
}
