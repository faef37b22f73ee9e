//! Binary PGM (P5), 8-bit only.

use super::Frame;
use crate::error::{Error, Result};

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) -> usize {
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
        self.pos - start
    }

    fn read_unsigned(&mut self, what: &str) -> Result<usize> {
        let start = self.pos;
        let mut value: usize = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as usize))
                .ok_or_else(|| Error::parse(start, format!("{what} overflows")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        Ok(value)
    }

    fn header_field(&mut self, what: &str) -> Result<usize> {
        if self.skip_whitespace_and_comments() == 0 {
            return Err(Error::parse(self.pos, format!("expected whitespace before {what}")));
        }
        self.read_unsigned(what)
    }
}

/// Decodes a binary 8-bit PGM, scaling each sample by `1 / maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::parse(0, "missing P5 magic number"));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.header_field("width")?;
    let height = cur.header_field("height")?;
    let maxval_offset = cur.pos;
    let maxval = cur.header_field("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse(maxval_offset, format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(maxval_offset, format!("maxval {maxval} is not in 1..=255")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::parse(cur.pos, "expected single whitespace after maxval")),
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse(cur.pos, "pixel count overflows"))?;
    let data = &bytes[cur.pos..];
    if data.len() < count {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated raster: need {count} bytes, found {}", data.len()),
        ));
    }
    let scale = maxval as f64;
    let mut pixels = Vec::with_capacity(count);
    for (i, &b) in data[..count].iter().enumerate() {
        if b as usize > maxval {
            return Err(Error::parse(cur.pos + i, format!("sample {b} exceeds maxval {maxval}")));
        }
        pixels.push(b as f64 / scale);
    }
    Frame::new(width, height, pixels)
}

/// Encodes a frame as P5 with maxval 255, rounding to the nearest level.
pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", frame.width(), frame.height());
    let mut out = Vec::with_capacity(header.len() + frame.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(frame.pixels().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}
