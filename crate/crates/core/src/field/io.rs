//! Binary field checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "ASFIELD1"
//! bounds     6 x f64  min.x min.y min.z max.x max.y max.z
//! resolution 3 x u32  nx ny nz
//! categories 1 x u32  C
//! logits     nx*ny*nz*(4+C) x f32, vertex-major
//! checksum   32 bytes SHA-256 of everything above
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::grid::FieldGrid;
use super::FieldError;
use crate::scene::{Aabb, Vec3};

const MAGIC: &[u8; 8] = b"ASFIELD1";

pub fn encode_checkpoint(field: &FieldGrid) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + 48 + 16 + field.params().len() * 4 + 32);
    buf.extend_from_slice(MAGIC);
    let b = field.bounds();
    for v in [b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for n in field.resolution() {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(field.num_categories() as u32).to_le_bytes());
    for &p in field.params() {
        buf.extend_from_slice(&(p as f32).to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<FieldGrid, FieldError> {
    let bad = |m: &str| FieldError::Checkpoint(m.to_string());
    if bytes.len() < 8 + 48 + 16 + 32 {
        return Err(bad("file too short"));
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(bad("checksum mismatch"));
    }
    if &body[..8] != MAGIC {
        return Err(bad("bad magic"));
    }
    let f64_at = |o: usize| f64::from_le_bytes(body[o..o + 8].try_into().unwrap());
    let u32_at = |o: usize| u32::from_le_bytes(body[o..o + 4].try_into().unwrap()) as usize;
    let bounds = Aabb::new(
        Vec3::new(f64_at(8), f64_at(16), f64_at(24)),
        Vec3::new(f64_at(32), f64_at(40), f64_at(48)),
    );
    let res = [u32_at(56), u32_at(60), u32_at(64)];
    let classes = u32_at(68);
    let data = &body[72..];
    if data.len() % 4 != 0 {
        return Err(bad("truncated logits"));
    }
    let params: Vec<f64> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FieldGrid::from_params(bounds, res, classes, params)
}

pub fn write_checkpoint<W: Write>(mut w: W, field: &FieldGrid) -> Result<(), FieldError> {
    w.write_all(&encode_checkpoint(field))?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<FieldGrid, FieldError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}

pub fn save_checkpoint(field: &FieldGrid, path: &Path) -> Result<(), FieldError> {
    fs::write(path, encode_checkpoint(field))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<FieldGrid, FieldError> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldInit;

    fn field() -> FieldGrid {
        let b = Aabb::new(Vec3::new(-1.0, -2.0, 0.0), Vec3::new(3.0, 2.0, 3.0));
        FieldGrid::new(b, [3, 4, 5], 6, &FieldInit::default(), 17).unwrap()
    }

    #[test]
    fn roundtrip_is_f32_exact() {
        let f = field();
        let g = decode_checkpoint(&encode_checkpoint(&f)).unwrap();
        assert_eq!(g.resolution(), f.resolution());
        assert_eq!(g.num_categories(), 6);
        assert_eq!(g.bounds(), f.bounds());
        for (a, b) in f.params().iter().zip(g.params()) {
            assert_eq!(*a as f32 as f64, *b);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = encode_checkpoint(&field());
        bytes[100] ^= 1;
        assert!(decode_checkpoint(&bytes).is_err());
        assert!(decode_checkpoint(&bytes[..50]).is_err());
    }
}
