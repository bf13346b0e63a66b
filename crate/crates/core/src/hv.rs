//! Binary hypervectors and the bundling algebra.
//!
//! A [`Hypervector`] of dimension `D` packs its bits into `ceil(D / 64)`
//! little-endian `u64` words: dimension `i` lives in bit `i % 64` of word
//! `i / 64`. Bits at positions `>= D` in the last word are always zero, so a
//! plain popcount over the words counts only real dimensions.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::frame::SpeckleFrame;
use crate::rng::{domain, keyed_rng};

/// Largest supported dimension (2^26 bits).
pub const MAX_DIM: usize = 1 << 26;

fn n_words(dim: usize) -> usize {
    dim.div_ceil(64)
}

/// Mask of valid bits in the final word.
fn tail_mask(dim: usize) -> u64 {
    match dim % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

fn check_dim(dim: usize, max: usize) -> Result<()> {
    if dim == 0 || dim > max {
        return Err(Error::DimensionOutOfRange { dim, max });
    }
    Ok(())
}

fn same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Hypervector {
    dim: usize,
    words: Vec<u64>,
}

impl Hypervector {
    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim, MAX_DIM)?;
        Ok(Self {
            dim,
            words: vec![0; n_words(dim)],
        })
    }

    /// Builds a hypervector from packed words, rejecting set trailing bits.
    pub fn from_words(dim: usize, words: Vec<u64>) -> Result<Self> {
        check_dim(dim, MAX_DIM)?;
        if words.len() != n_words(dim) {
            return Err(Error::Invalid(format!(
                "{} words cannot hold exactly {dim} bits",
                words.len()
            )));
        }
        if words[words.len() - 1] & !tail_mask(dim) != 0 {
            return Err(Error::Invalid(format!(
                "bits set beyond dimension {dim}"
            )));
        }
        Ok(Self { dim, words })
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let mut hv = Self::zeros(bits.len())?;
        for (i, &b) in bits.iter().enumerate() {
            hv.set(i, b);
        }
        Ok(hv)
    }

    /// I.i.d. Bernoulli(1/2) bits, a pure function of `(dim, seed)`.
    pub fn random(dim: usize, seed: u64) -> Result<Self> {
        check_dim(dim, MAX_DIM)?;
        let mut rng = keyed_rng(seed, domain::RANDOM_HV, 0);
        let mut words: Vec<u64> = (0..n_words(dim)).map(|_| rng.next_u64()).collect();
        let last = words.len() - 1;
        words[last] &= tail_mask(dim);
        Ok(Self { dim, words })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.dim, "bit {i} out of range for dimension {}", self.dim);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.dim, "bit {i} out of range for dimension {}", self.dim);
        let m = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.dim, "bit {i} out of range for dimension {}", self.dim);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn popcount(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.dim).map(|i| self.get(i)).collect()
    }

    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        let last = words.len() - 1;
        words[last] &= tail_mask(self.dim);
        Self {
            dim: self.dim,
            words,
        }
    }

    /// Number of positions where `self` and `other` differ.
    pub fn hamming(&self, other: &Self) -> Result<u64> {
        same_dim(self.dim, other.dim)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| u64::from((a ^ b).count_ones()))
            .sum())
    }

    pub fn normalized_hamming(&self, other: &Self) -> Result<f64> {
        Ok(self.hamming(other)? as f64 / self.dim as f64)
    }

    /// Number of positions where both vectors are 1.
    pub fn overlap(&self, other: &Self) -> Result<u64> {
        same_dim(self.dim, other.dim)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| u64::from((a & b).count_ones()))
            .sum())
    }
}

pub fn hamming(a: &Hypervector, b: &Hypervector) -> Result<u64> {
    a.hamming(b)
}

pub fn normalized_hamming(a: &Hypervector, b: &Hypervector) -> Result<f64> {
    a.normalized_hamming(b)
}

pub fn complement(a: &Hypervector) -> Hypervector {
    a.complement()
}

pub fn random_hypervector(dim: usize, seed: u64) -> Result<Hypervector> {
    Hypervector::random(dim, seed)
}

/// Per-dimension '1' counters for incremental bundling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleAccumulator {
    dim: usize,
    counts: Vec<u32>,
    n_added: u32,
}

impl BundleAccumulator {
    pub fn new(dim: usize) -> Result<Self> {
        check_dim(dim, MAX_DIM)?;
        Ok(Self {
            dim,
            counts: vec![0; dim],
            n_added: 0,
        })
    }

    /// Reassembles an accumulator, checking `counts[i] <= n_added`.
    pub fn from_parts(counts: Vec<u32>, n_added: u32) -> Result<Self> {
        check_dim(counts.len(), MAX_DIM)?;
        if let Some(i) = counts.iter().position(|&c| c > n_added) {
            return Err(Error::Invalid(format!(
                "counter {i} is {} but only {n_added} vectors were added",
                counts[i]
            )));
        }
        Ok(Self {
            dim: counts.len(),
            counts,
            n_added,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n_added(&self) -> u32 {
        self.n_added
    }

    pub fn accumulate(&mut self, hv: &Hypervector) -> Result<()> {
        same_dim(self.dim, hv.dim)?;
        if self.n_added == u32::MAX {
            return Err(Error::Invalid("accumulator counter overflow".into()));
        }
        for (chunk, &w) in self.counts.chunks_mut(64).zip(&hv.words) {
            for (j, c) in chunk.iter_mut().enumerate() {
                *c += ((w >> j) & 1) as u32;
            }
        }
        self.n_added += 1;
        Ok(())
    }

    /// Majority vote per dimension; an exact tie (even `n_added`) yields 1.
    pub fn finalize(&self) -> Result<Hypervector> {
        if self.n_added == 0 {
            return Err(Error::Empty("accumulator has no vectors"));
        }
        let n = u64::from(self.n_added);
        let words = self
            .counts
            .chunks(64)
            .map(|chunk| {
                chunk.iter().enumerate().fold(0u64, |w, (j, &c)| {
                    w | (u64::from(2 * u64::from(c) >= n) << j)
                })
            })
            .collect();
        Ok(Hypervector {
            dim: self.dim,
            words,
        })
    }
}

pub fn finalize_majority(acc: &BundleAccumulator) -> Result<Hypervector> {
    acc.finalize()
}

/// Majority bundle of a non-empty set of hypervectors.
pub fn bundle<'a, I>(hvs: I) -> Result<Hypervector>
where
    I: IntoIterator<Item = &'a Hypervector>,
{
    let mut iter = hvs.into_iter();
    let first = iter.next().ok_or(Error::Empty("bundle of no hypervectors"))?;
    let mut acc = BundleAccumulator::new(first.dim)?;
    acc.accumulate(first)?;
    for hv in iter {
        acc.accumulate(hv)?;
    }
    acc.finalize()
}

/// Takes each bit from `new` with probability `p`, otherwise keeps `old`.
///
/// Dimension `i` uses the `i`-th draw of the merge stream for `seed`, so the
/// result does not depend on how the work is partitioned.
pub fn merge_probabilistic(
    old: &Hypervector,
    new: &Hypervector,
    p: f64,
    seed: u64,
) -> Result<Hypervector> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Probability(p));
    }
    same_dim(old.dim, new.dim)?;
    let mut rng = keyed_rng(seed, domain::MERGE, 0);
    let mut words = Vec::with_capacity(old.words.len());
    for (w, (&o, &n)) in old.words.iter().zip(&new.words).enumerate() {
        let bits = (old.dim - w * 64).min(64);
        let mut take = 0u64;
        for j in 0..bits {
            let u: f64 = rng.random();
            take |= u64::from(u < p) << j;
        }
        words.push((o & !take) | (n & take));
    }
    Ok(Hypervector {
        dim: old.dim,
        words,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinarizeMode {
    /// Exactly `floor(D/2)` ones: the brightest pixels, ties to lower index.
    #[default]
    ExactBalance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinarizePolicy {
    pub mode: BinarizeMode,
    pub max_dim: usize,
}

impl Default for BinarizePolicy {
    fn default() -> Self {
        Self {
            mode: BinarizeMode::ExactBalance,
            max_dim: MAX_DIM,
        }
    }
}

/// Thresholds a frame into a hypervector with exactly `floor(D/2)` ones.
///
/// Bit `i` is pixel `i` in row-major order. The `floor(D/2)` brightest
/// pixels become 1; pixels tied at the threshold value are filled in
/// ascending index order.
pub fn binarize_frame(frame: &SpeckleFrame, policy: &BinarizePolicy) -> Result<Hypervector> {
    let dim = frame.len();
    check_dim(dim, policy.max_dim.min(MAX_DIM))?;
    if dim < 2 {
        return Err(Error::Invalid("binarization needs at least 2 pixels".into()));
    }
    match policy.mode {
        BinarizeMode::ExactBalance => {}
    }
    let px = frame.pixels();
    let half = dim / 2;

    let mut hist = vec![0usize; 1 << 16];
    for &v in px {
        hist[usize::from(v)] += 1;
    }
    // Largest threshold t with count(v >= t) >= half.
    let mut above = 0usize;
    let mut t = u16::MAX;
    loop {
        let c = hist[usize::from(t)];
        if above + c >= half {
            break;
        }
        above += c;
        t -= 1;
    }
    let mut ties_left = half - above;

    let mut hv = Hypervector::zeros(dim)?;
    for (chunk, word) in px.chunks(64).zip(hv.words.iter_mut()) {
        let mut w = 0u64;
        for (j, &v) in chunk.iter().enumerate() {
            let one = if v > t {
                true
            } else if v == t && ties_left > 0 {
                ties_left -= 1;
                true
            } else {
                false
            };
            w |= u64::from(one) << j;
        }
        *word = w;
    }
    Ok(hv)
}
