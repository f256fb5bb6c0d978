//! On-disk formats for scenes and observations.
//!
//! * scene: JSON (serde)
//! * rgb: binary PPM (`P6`, 8-bit)
//! * depth: ASCII header `ASDEPTH1 <w> <h>\n` followed by `w*h` little-endian
//!   `f32` ranges; no-hit pixels are stored as `f32::MAX`
//! * category: ASCII header `ASCAT16 <w> <h>\n` followed by `w*h`
//!   little-endian `u16` ids

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Observation, Scene};

pub const DEPTH_MAGIC: &str = "ASDEPTH1";
pub const CATEGORY_MAGIC: &str = "ASCAT16";

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn save_scene(scene: &Scene, path: &Path) -> io::Result<()> {
    let json = serde_json::to_string_pretty(scene).map_err(io::Error::other)?;
    fs::write(path, json)
}

pub fn load_scene(path: &Path) -> io::Result<Scene> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an RGB image with channel values in `[0, 1]`.
pub fn write_ppm<W: Write>(mut w: W, width: usize, height: usize, rgb: &[[f64; 3]]) -> io::Result<()> {
    write!(w, "P6\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = rgb.iter().flat_map(|p| p.map(to_byte)).collect();
    w.write_all(&bytes)
}

pub fn read_ppm<R: Read>(r: R) -> io::Result<(usize, usize, Vec<[f64; 3]>)> {
    let mut r = BufReader::new(r);
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(invalid("truncated PPM header"));
        }
        let line = line.split('#').next().unwrap_or("");
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    if tokens[0] != "P6" || tokens[3] != "255" {
        return Err(invalid("unsupported PPM variant"));
    }
    let w: usize = tokens[1].parse().map_err(|_| invalid("bad width"))?;
    let h: usize = tokens[2].parse().map_err(|_| invalid("bad height"))?;
    let mut bytes = vec![0u8; w * h * 3];
    r.read_exact(&mut bytes)?;
    let px = bytes
        .chunks_exact(3)
        .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
        .collect();
    Ok((w, h, px))
}

fn read_header<R: BufRead>(r: &mut R, magic: &str) -> io::Result<(usize, usize)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let mut it = line.split_whitespace();
    if it.next() != Some(magic) {
        return Err(invalid(format!("expected {magic} header")));
    }
    let mut dim = || -> io::Result<usize> {
        it.next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| invalid("bad dimensions"))
    };
    Ok((dim()?, dim()?))
}

pub fn write_depth<W: Write>(mut w: W, width: usize, height: usize, depth: &[f64]) -> io::Result<()> {
    writeln!(w, "{DEPTH_MAGIC} {width} {height}")?;
    let mut bytes = Vec::with_capacity(depth.len() * 4);
    for &d in depth {
        let v = if d.is_finite() { d as f32 } else { f32::MAX };
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)
}

pub fn read_depth<R: Read>(r: R) -> io::Result<(usize, usize, Vec<f64>)> {
    let mut r = BufReader::new(r);
    let (w, h) = read_header(&mut r, DEPTH_MAGIC)?;
    let mut bytes = vec![0u8; w * h * 4];
    r.read_exact(&mut bytes)?;
    let d = bytes
        .chunks_exact(4)
        .map(|c| {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if v == f32::MAX {
                f64::INFINITY
            } else {
                v as f64
            }
        })
        .collect();
    Ok((w, h, d))
}

pub fn write_category<W: Write>(mut w: W, width: usize, height: usize, cat: &[u16]) -> io::Result<()> {
    writeln!(w, "{CATEGORY_MAGIC} {width} {height}")?;
    let bytes: Vec<u8> = cat.iter().flat_map(|c| c.to_le_bytes()).collect();
    w.write_all(&bytes)
}

pub fn read_category<R: Read>(r: R) -> io::Result<(usize, usize, Vec<u16>)> {
    let mut r = BufReader::new(r);
    let (w, h) = read_header(&mut r, CATEGORY_MAGIC)?;
    let mut bytes = vec![0u8; w * h * 2];
    r.read_exact(&mut bytes)?;
    Ok((
        w,
        h,
        bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect(),
    ))
}

/// Saves `<stem>.ppm`, `<stem>.depth` and `<stem>.cat` into `dir`.
pub fn save_observation(obs: &Observation, dir: &Path, stem: &str) -> io::Result<()> {
    let (w, h) = (obs.intrinsics.width, obs.intrinsics.height);
    write_ppm(fs::File::create(dir.join(format!("{stem}.ppm")))?, w, h, &obs.rgb)?;
    write_depth(fs::File::create(dir.join(format!("{stem}.depth")))?, w, h, &obs.depth)?;
    write_category(fs::File::create(dir.join(format!("{stem}.cat")))?, w, h, &obs.category)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_sentinel_round_trip() {
        let d = vec![1.5, f64::INFINITY, 0.25, 7.0];
        let mut buf = Vec::new();
        write_depth(&mut buf, 2, 2, &d).unwrap();
        let (w, h, back) = read_depth(&buf[..]).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(back, d);
    }

    #[test]
    fn category_and_ppm_round_trip() {
        let c = vec![0u16, 7, 65535];
        let mut buf = Vec::new();
        write_category(&mut buf, 3, 1, &c).unwrap();
        assert_eq!(read_category(&buf[..]).unwrap().2, c);

        let px = vec![[0.0, 1.0, 0.2], [1.0, 0.0, 0.6]];
        let mut buf = Vec::new();
        write_ppm(&mut buf, 2, 1, &px).unwrap();
        let (_, _, back) = read_ppm(&buf[..]).unwrap();
        for (a, b) in px.iter().zip(&back) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut buf = Vec::new();
        write_category(&mut buf, 1, 1, &[1]).unwrap();
        assert!(read_depth(&buf[..]).is_err());
    }
}
