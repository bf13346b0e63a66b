//! HDCM prototype-memory files (all integers little-endian).
//!
//! ```text
//! magic "HDCM" | version u16 | D u32 | L u16
//! per class:
//!   label_len u16 | label utf-8 | n_samples u32 | merged u8
//!   prototype: ceil(D/64) x u64
//!   has_accumulator u8 | [D x u32 counters]
//! ```

use std::path::Path;

use super::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::hv::{BundleAccumulator, Hypervector};
use crate::memory::{ClassEntry, PrototypeMemory};

pub const HDCM_MAGIC: &[u8; 4] = b"HDCM";
pub const HDCM_VERSION: u16 = 1;

pub fn encode_memory(memory: &PrototypeMemory) -> Result<Vec<u8>> {
    let dim = u32::try_from(memory.dim())
        .map_err(|_| Error::Invalid("dimension does not fit in u32".into()))?;
    let n = u16::try_from(memory.len())
        .map_err(|_| Error::Invalid("more than 65535 classes".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(HDCM_MAGIC);
    out.extend_from_slice(&HDCM_VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    for c in memory.classes() {
        let label = c.label().as_bytes();
        let len = u16::try_from(label.len())
            .map_err(|_| Error::Invalid(format!("label too long: {} bytes", label.len())))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(label);
        out.extend_from_slice(&c.n_samples().to_le_bytes());
        out.push(u8::from(c.merged()));
        for w in c.prototype().words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        match c.accumulator() {
            Some(acc) => {
                out.push(1);
                for v in acc.counts() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => out.push(0),
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(self.path, format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn flag(&mut self, what: &str) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::format(self.path, format!("{what} flag must be 0 or 1, got {v}"))),
        }
    }
}

pub fn decode_memory(bytes: &[u8], path: &Path) -> Result<PrototypeMemory> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4).ok() != Some(HDCM_MAGIC.as_slice()) {
        return Err(Error::format(path, "bad magic, not an HDCM file"));
    }
    let version = r.u16()?;
    if version != HDCM_VERSION {
        return Err(Error::Version {
            found: version,
            supported: HDCM_VERSION,
        });
    }
    let dim = r.u32()? as usize;
    let n = r.u16()?;
    let bad = |e: Error| Error::format(path, e.to_string());
    let mut classes = Vec::with_capacity(usize::from(n));
    for _ in 0..n {
        let len = usize::from(r.u16()?);
        let label = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format(path, "label is not UTF-8"))?
            .to_owned();
        let n_samples = r.u32()?;
        let merged = r.flag("merged")?;
        let raw = r.take(dim.div_ceil(64).checked_mul(8).ok_or_else(|| Error::format(path, "dimension too large"))?)?;
        let words = raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let prototype = Hypervector::from_words(dim, words).map_err(bad)?;
        let accumulator = if r.flag("accumulator")? {
            let raw = r.take(dim * 4)?;
            let counts = raw
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Some(BundleAccumulator::from_parts(counts, n_samples).map_err(bad)?)
        } else {
            None
        };
        classes.push(ClassEntry::from_parts(label, prototype, accumulator, n_samples, merged).map_err(bad)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after last class"));
    }
    PrototypeMemory::from_classes(dim, classes).map_err(bad)
}

pub fn save_memory(path: &Path, memory: &PrototypeMemory) -> Result<()> {
    write_atomic(path, &encode_memory(memory)?)
}

pub fn load_memory(path: &Path) -> Result<PrototypeMemory> {
    decode_memory(&read_bytes(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("m.hdcm")
    }

    fn five_class(d: usize) -> PrototypeMemory {
        let hvs: Vec<_> = (0..25).map(|s| Hypervector::random(d, s).unwrap()).collect();
        let labels = ["L1", "L2", "R1", "R2", "None"];
        PrototypeMemory::train(hvs.iter().enumerate().map(|(i, h)| (h, labels[i % 5]))).unwrap()
    }

    #[test]
    fn round_trip_with_counters() {
        let m = five_class(10_000);
        let bytes = encode_memory(&m).unwrap();
        let back = decode_memory(&bytes, p()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.classes()[3].accumulator().unwrap().counts(), m.classes()[3].accumulator().unwrap().counts());
    }

    #[test]
    fn round_trip_merged() {
        let m = five_class(130);
        let extra = Hypervector::random(130, 99).unwrap();
        let r = m.recalibrate([(&extra, "R1")], 0.5, 4).unwrap();
        assert_eq!(decode_memory(&encode_memory(&r).unwrap(), p()).unwrap(), r);
    }

    #[test]
    fn rejects_trailing_bits() {
        let m = five_class(100);
        let mut bytes = encode_memory(&m).unwrap();
        // header 12 bytes, label "L1" 2+2, n_samples 4, merged 1 -> prototype at 21
        let last_word = 21 + 8;
        bytes[last_word + 7] |= 0x80;
        assert!(matches!(decode_memory(&bytes, p()), Err(Error::Format { .. })));
    }

    #[test]
    fn rejects_bad_header_and_truncation() {
        let m = five_class(64);
        let bytes = encode_memory(&m).unwrap();
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            decode_memory(&v2, p()),
            Err(Error::Version { found: 2, supported: 1 })
        ));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(decode_memory(&magic, p()).is_err());
        for cut in [3, 11, 20, bytes.len() - 1] {
            assert!(decode_memory(&bytes[..cut], p()).is_err(), "cut {cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_memory(&long, p()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.hdcm");
        let m = five_class(300);
        save_memory(&path, &m).unwrap();
        assert_eq!(load_memory(&path).unwrap(), m);
    }
}
