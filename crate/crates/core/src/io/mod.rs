//! On-disk formats: 16-bit PGM frames, CSV dataset manifests and HDCM
//! prototype-memory files.
//!
//! Dataset layout: `<dir>/manifest.csv` plus `<dir>/frames/*.pgm`, with frame
//! paths in the manifest relative to `<dir>`.

mod manifest;
mod model;
mod pgm;

use std::io::Write;
use std::path::Path;

pub use manifest::{
    read_manifest, split_dataset, write_manifest, DatasetManifest, ManifestRecord, Split,
};
pub use model::{decode_memory, encode_memory, load_memory, save_memory, HDCM_MAGIC, HDCM_VERSION};
pub use pgm::{decode_pgm, encode_pgm, read_frame, write_frame};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const FRAMES_DIR: &str = "frames";

/// Writes `bytes` to a temporary file beside `path`, then renames it into
/// place so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
