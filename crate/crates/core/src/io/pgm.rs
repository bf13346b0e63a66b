//! Binary PGM ("P5") with maxval 65535. Samples are big-endian 16-bit, as the
//! Netpbm format requires.

use std::path::Path;

use super::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::frame::SpeckleFrame;

const MAXVAL: u32 = 65535;

pub fn encode_pgm(frame: &SpeckleFrame) -> Vec<u8> {
    let header = format!("P5\n{} {}\n{MAXVAL}\n", frame.width(), frame.height());
    let mut out = Vec::with_capacity(header.len() + 2 * frame.len());
    out.extend_from_slice(header.as_bytes());
    for &p in frame.pixels() {
        out.extend_from_slice(&p.to_be_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Option<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()?
            .parse()
            .ok()
    }
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<SpeckleFrame> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(path, "missing P5 magic"));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number().ok_or_else(|| Error::format(path, "bad width"))?;
    let height = cur.number().ok_or_else(|| Error::format(path, "bad height"))?;
    let maxval = cur.number().ok_or_else(|| Error::format(path, "bad maxval"))?;
    if maxval != MAXVAL {
        return Err(Error::format(path, format!("maxval {maxval}, expected {MAXVAL}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::format(path, "header not terminated by whitespace")),
    }
    let (w, h) = (width as usize, height as usize);
    let n = w
        .checked_mul(h)
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::format(path, format!("invalid size {width}x{height}")))?;
    let raster = &bytes[cur.pos..];
    if raster.len() < 2 * n {
        return Err(Error::format(
            path,
            format!("truncated raster: {} of {} bytes", raster.len(), 2 * n),
        ));
    }
    if raster.len() > 2 * n {
        return Err(Error::format(path, "trailing data after raster"));
    }
    let pixels = raster
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    SpeckleFrame::new(h, w, pixels)
}

pub fn write_frame(path: &Path, frame: &SpeckleFrame) -> Result<()> {
    write_atomic(path, &encode_pgm(frame))
}

pub fn read_frame(path: &Path) -> Result<SpeckleFrame> {
    decode_pgm(&read_bytes(path)?, path)
}
