//! Middlebury `.flo` files: `f32` sentinel 202021.25, `i32` width, `i32`
//! height, then row-major interleaved `f32` `(u, v)`; all little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::FlowField;
use crate::{Error, Result};

pub const FLO_SENTINEL: f32 = 202021.25;

pub fn write_flo(f: &FlowField, mut out: impl Write) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + 8 * f.u().len());
    buf.extend_from_slice(&FLO_SENTINEL.to_le_bytes());
    buf.extend_from_slice(&(f.width() as i32).to_le_bytes());
    buf.extend_from_slice(&(f.height() as i32).to_le_bytes());
    for (u, v) in f.u().iter().zip(f.v()) {
        buf.extend_from_slice(&(*u as f32).to_le_bytes());
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_flo(mut input: impl Read) -> Result<FlowField> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 12 {
        return Err(Error::FloFormat(format!("header truncated ({} bytes)", bytes.len())));
    }
    let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().unwrap() };
    let sentinel = f32::from_le_bytes(word(0));
    if sentinel != FLO_SENTINEL {
        return Err(Error::FloFormat(format!("bad sentinel {sentinel}")));
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w <= 0 || h <= 0 {
        return Err(Error::FloFormat(format!("bad dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::FloFormat("dimensions overflow".into()))?;
    let payload = &bytes[12..];
    if payload.len() < need {
        return Err(Error::FloFormat(format!("payload truncated: {} of {need} bytes", payload.len())));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for px in payload[..need].chunks_exact(8) {
        u.push(f64::from(f32::from_le_bytes(px[0..4].try_into().unwrap())));
        v.push(f64::from(f32::from_le_bytes(px[4..8].try_into().unwrap())));
    }
    FlowField::new(w, h, u, v).map_err(|e| Error::FloFormat(e.to_string()))
}

pub fn write_flo_file(path: impl AsRef<Path>, f: &FlowField) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::from(e).at(path))?;
    write_flo(f, std::io::BufWriter::new(file)).map_err(|e| e.at(path))
}

pub fn read_flo_file(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).at(path))?;
    read_flo(std::io::BufReader::new(file)).map_err(|e| e.at(path))
}
