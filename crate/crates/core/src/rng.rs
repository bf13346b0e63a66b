//! Keyed random streams.
//!
//! Every random quantity in the crate comes from a ChaCha8 stream addressed by
//! `(seed, domain, stream)`. ChaCha is counter based, so the `i`-th draw of a
//! stream is a fixed function of the key and `i`; results never depend on the
//! order in which independent streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub(crate) mod domain {
    pub const RANDOM_HV: u64 = 1;
    pub const MERGE: u64 = 2;
    pub const TRANSMISSION: u64 = 3;
    pub const BASE_PHASE: u64 = 4;
    pub const TEXTURE: u64 = 5;
    pub const DRIFT: u64 = 6;
    pub const READ_NOISE: u64 = 7;
    pub const JITTER: u64 = 8;
    pub const SPLIT: u64 = 9;
}

/// ChaCha8 stream keyed by `(seed, domain)` and positioned on `stream`.
pub fn keyed_rng(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Stable 64-bit seed derived from a parent seed and a byte-string tag.
pub fn derive_seed(seed: u64, tag: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag);
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}
