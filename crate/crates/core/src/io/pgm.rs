//! Binary graymap (P5). Samples wider than one byte are big-endian, as the
//! Netpbm format prescribes; maps are always written with maxval 65535.

use std::fs;
use std::path::Path;

use crate::displacement::LabelMap;
use crate::error::{invalid, Error, Result};
use crate::gcm::EnergyMap;
use crate::grid::GridShape;

const MAXVAL: u32 = 65535;

fn parse_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        msg: msg.into(),
    }
}

pub fn encode_pgm(map: &LabelMap) -> Result<Vec<u8>> {
    let shape = map.shape();
    let mut out = format!("P5\n{} {}\n{}\n", shape.w, shape.h, MAXVAL).into_bytes();
    out.reserve(2 * shape.len());
    for &v in map.labels() {
        let v = u16::try_from(v).map_err(|_| invalid(format!("label {v} does not fit 16 bits")))?;
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(start, format!("{what} out of range")))
    }
}

/// Decodes a P5 graymap. Samples are one byte when maxval < 256, else two.
pub fn decode_pgm(bytes: &[u8]) -> Result<LabelMap> {
    if !bytes.starts_with(b"P5") {
        return Err(parse_err(0, "missing P5 magic"));
    }
    let mut hdr = Header { bytes, pos: 2 };
    let w = hdr.number("width")?;
    let h = hdr.number("height")?;
    hdr.skip_space();
    let maxval_at = hdr.pos;
    let maxval = hdr.number("maxval")?;
    if maxval == 0 || maxval > MAXVAL {
        return Err(parse_err(
            maxval_at,
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    match bytes.get(hdr.pos) {
        Some(b) if b.is_ascii_whitespace() => hdr.pos += 1,
        _ => return Err(parse_err(hdr.pos, "expected whitespace after maxval")),
    }
    let shape = GridShape::new(h as usize, w as usize).map_err(|_| parse_err(0, "empty image"))?;
    let width = if maxval < 256 { 1 } else { 2 };
    let payload = &bytes[hdr.pos..];
    let need = shape.len() * width;
    if payload.len() < need {
        return Err(parse_err(
            bytes.len(),
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    let labels = payload[..need]
        .chunks_exact(width)
        .map(|s| match *s {
            [b] => u32::from(b),
            [hi, lo] => u32::from(u16::from_be_bytes([hi, lo])),
            _ => unreachable!(),
        })
        .collect();
    LabelMap::new(shape, labels)
}

pub fn write_map(path: impl AsRef<Path>, map: &LabelMap) -> Result<()> {
    fs::write(path, encode_pgm(map)?)?;
    Ok(())
}

pub fn read_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    decode_pgm(&fs::read(path)?)
}

/// Graymap read as per-pixel energies.
pub fn read_energy(path: impl AsRef<Path>) -> Result<EnergyMap> {
    let map = read_map(path)?;
    EnergyMap::new(
        map.shape(),
        map.labels().iter().map(|&v| f64::from(v)).collect(),
    )
}
