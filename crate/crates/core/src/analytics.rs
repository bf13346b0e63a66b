//! Correlation matrices, correlation contrast, evaluation reports and
//! speckle statistics.
//!
//! All moments are population moments (divide by `n`).

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::frame::SpeckleFrame;
use crate::hv::Hypervector;
use crate::memory::PrototypeMemory;

/// Pearson correlation with population moments.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Invalid("pearson needs at least 2 values".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance in pearson input".into()));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Pearson correlation of two hypervectors with bits read as reals in {0, 1}.
pub fn hv_pearson(a: &Hypervector, b: &Hypervector) -> Result<f64> {
    let d = a.dim() as f64;
    let n11 = a.overlap(b)? as f64;
    let ma = a.popcount() as f64 / d;
    let mb = b.popcount() as f64 / d;
    let va = ma * (1.0 - ma);
    let vb = mb * (1.0 - mb);
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Degenerate("constant hypervector".into()));
    }
    Ok((n11 / d - ma * mb) / (va.sqrt() * vb.sqrt()))
}

/// Z-scored copy of `x` (population moments).
fn standardize(x: impl ExactSizeIterator<Item = f64> + Clone) -> Result<Vec<f64>> {
    let n = x.len() as f64;
    let mean = x.clone().sum::<f64>() / n;
    let var = x.clone().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::Degenerate("zero variance sample".into()));
    }
    let sd = var.sqrt();
    Ok(x.map(|v| (v - mean) / sd).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationKind {
    Speckle,
    Hv,
    Prototype,
}

impl CorrelationKind {
    pub fn name(self) -> &'static str {
        match self {
            CorrelationKind::Speckle => "speckle",
            CorrelationKind::Hv => "hv",
            CorrelationKind::Prototype => "prototype",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub kind: CorrelationKind,
}

impl CorrelationMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| (0..n).all(|j| self.values[i][j].to_bits() == self.values[j][i].to_bits()))
    }

    /// `max_{l,l'} |C[l][l] - C[l][l']|`.
    pub fn contrast(&self) -> f64 {
        contrast(&self.values)
    }

    pub fn mean_diagonal(&self) -> f64 {
        let n = self.len();
        (0..n).map(|i| self.values[i][i]).sum::<f64>() / n as f64
    }

    /// Mean of off-diagonal entries (NaN for a 1x1 matrix).
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += self.values[i][j];
                }
            }
        }
        s / (n * n - n) as f64
    }

    /// CSV with a header row and one row per label.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![self.kind.name().to_owned()];
        header.extend(self.labels.iter().cloned());
        write_csv_record(&mut out, &header)?;
        for (label, row) in self.labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| format!("{v:.6}")));
            write_csv_record(&mut out, &rec)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))
    }
}

impl fmt::Display for CorrelationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.labels.iter().map(String::len).max().unwrap_or(0).max(8);
        write!(f, "{:>w$}", self.kind.name())?;
        for l in &self.labels {
            write!(f, " {l:>w$}")?;
        }
        writeln!(f)?;
        for (l, row) in self.labels.iter().zip(&self.values) {
            write!(f, "{l:>w$}")?;
            for v in row {
                write!(f, " {v:>w$.4}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn write_csv_record<W: Write>(w: &mut csv::Writer<W>, rec: &[String]) -> Result<()> {
    w.write_record(rec)
        .map_err(|e| Error::io("<csv>", std::io::Error::other(e)))
}

pub fn contrast(values: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (l, row) in values.iter().enumerate() {
        for v in row {
            best = best.max((row[l] - v).abs());
        }
    }
    best
}

/// Labelled samples of one class.
#[derive(Debug, Clone)]
pub struct Group<T> {
    pub label: String,
    pub items: Vec<T>,
}

impl<T> Group<T> {
    pub fn new(label: impl Into<String>, items: Vec<T>) -> Self {
        Self {
            label: label.into(),
            items,
        }
    }
}

fn common_group_size<T>(groups: &[Group<T>]) -> Result<usize> {
    let first = groups.first().ok_or(Error::Empty("no label groups"))?;
    let n = first.items.len();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "label {:?} needs at least 2 samples, has {n}",
            first.label
        )));
    }
    if let Some(g) = groups.iter().find(|g| g.items.len() != n) {
        return Err(Error::Invalid(format!(
            "unequal group sizes: {:?} has {}, expected {n}",
            g.label,
            g.items.len()
        )));
    }
    Ok(n)
}

/// Mean pairwise correlation over ordered pairs `(k, k')`, `k' != k`,
/// between samples of every pair of labels.
///
/// `fetch(l, k)` yields the standardized `k`-th sample of label `l`. With
/// `S_l = sum_k z_lk`, the sum over `k != k'` is
/// `S_l . S_l' - sum_k z_lk . z_l'k`, so only `O(L^2 * N_s)` dot products are
/// needed. The upper triangle is mirrored, making the result exactly symmetric.
fn pair_excluded_correlation<F>(
    labels: Vec<String>,
    n_s: usize,
    kind: CorrelationKind,
    mut fetch: F,
) -> Result<CorrelationMatrix>
where
    F: FnMut(usize, usize) -> Result<Vec<f64>>,
{
    let l = labels.len();
    let mut sums: Vec<Vec<f64>> = Vec::with_capacity(l);
    let mut same_k = vec![vec![0.0f64; l]; l];
    let mut d = 0usize;
    for k in 0..n_s {
        let z: Vec<Vec<f64>> = (0..l).map(|i| fetch(i, k)).collect::<Result<_>>()?;
        for zi in &z {
            if d == 0 {
                d = zi.len();
            }
            if zi.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: zi.len(),
                });
            }
        }
        for i in 0..l {
            for j in i..l {
                same_k[i][j] += dot(&z[i], &z[j]);
            }
        }
        if sums.is_empty() {
            sums = z;
        } else {
            for (s, zi) in sums.iter_mut().zip(&z) {
                for (a, b) in s.iter_mut().zip(zi) {
                    *a += b;
                }
            }
        }
    }
    let pairs = (n_s * (n_s - 1)) as f64;
    let mut values = vec![vec![0.0; l]; l];
    for i in 0..l {
        for j in i..l {
            let v = (dot(&sums[i], &sums[j]) - same_k[i][j]) / (d as f64 * pairs);
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(CorrelationMatrix {
        labels,
        values,
        kind,
    })
}

/// Mean speckle-frame correlation between labels, excluding same-index pairs.
pub fn speckle_correlation_matrix(groups: &[Group<SpeckleFrame>]) -> Result<CorrelationMatrix> {
    let n_s = common_group_size(groups)?;
    let labels = groups.iter().map(|g| g.label.clone()).collect();
    speckle_correlation_matrix_with(labels, n_s, |l, k| Ok(groups[l].items[k].clone()))
}

/// As [`speckle_correlation_matrix`], pulling frames on demand so that only
/// one sample per label is resident at a time.
pub fn speckle_correlation_matrix_with<F>(
    labels: Vec<String>,
    n_s: usize,
    mut fetch: F,
) -> Result<CorrelationMatrix>
where
    F: FnMut(usize, usize) -> Result<SpeckleFrame>,
{
    if labels.is_empty() {
        return Err(Error::Empty("no label groups"));
    }
    if n_s < 2 {
        return Err(Error::Invalid("need at least 2 samples per label".into()));
    }
    pair_excluded_correlation(labels, n_s, CorrelationKind::Speckle, |l, k| {
        let f = fetch(l, k)?;
        standardize(f.pixels().iter().map(|&p| f64::from(p)))
    })
}

/// Mean hypervector correlation between labels, excluding same-index pairs.
pub fn hv_correlation_matrix(groups: &[Group<Hypervector>]) -> Result<CorrelationMatrix> {
    let n_s = common_group_size(groups)?;
    let labels = groups.iter().map(|g| g.label.clone()).collect();
    pair_excluded_correlation(labels, n_s, CorrelationKind::Hv, |l, k| {
        let hv = &groups[l].items[k];
        standardize((0..hv.dim()).map(|i| if hv.get(i) { 1.0 } else { 0.0 }))
    })
}

/// Entry `(l, l')` is the mean correlation between the prototype of `l` and
/// the samples of `l'`. Not symmetric in general.
pub fn prototype_correlation_matrix(
    memory: &PrototypeMemory,
    groups: &[Group<Hypervector>],
) -> Result<CorrelationMatrix> {
    if groups.is_empty() {
        return Err(Error::Empty("no label groups"));
    }
    let protos = groups
        .iter()
        .map(|g| {
            memory
                .get(&g.label)
                .map(|c| c.prototype())
                .ok_or_else(|| Error::UnknownLabel(g.label.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![vec![0.0; groups.len()]; groups.len()];
    for (row, proto) in values.iter_mut().zip(&protos) {
        for (cell, g) in row.iter_mut().zip(groups) {
            if g.items.is_empty() {
                return Err(Error::Invalid(format!("label {:?} has no samples", g.label)));
            }
            let mut s = 0.0;
            for v in &g.items {
                s += hv_pearson(proto, v)?;
            }
            *cell = s / g.items.len() as f64;
        }
    }
    Ok(CorrelationMatrix {
        labels: groups.iter().map(|g| g.label.clone()).collect(),
        values,
        kind: CorrelationKind::Prototype,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub labels: Vec<String>,
    /// Rows are true labels, columns predicted labels.
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub per_label_counts: Vec<u64>,
}

impl EvaluationReport {
    /// Builds a report from `(true_index, predicted_index)` pairs.
    pub fn from_pairs(labels: Vec<String>, pairs: &[(usize, usize)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("no test samples"));
        }
        let l = labels.len();
        let mut confusion = vec![vec![0u64; l]; l];
        for &(t, p) in pairs {
            if t >= l || p >= l {
                return Err(Error::Invalid(format!("class index out of range ({t}, {p})")));
            }
            confusion[t][p] += 1;
        }
        let per_label_counts: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
        let correct: u64 = (0..l).map(|i| confusion[i][i]).sum();
        Ok(Self {
            labels,
            accuracy: correct as f64 / pairs.len() as f64,
            confusion,
            per_label_counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.per_label_counts.iter().sum()
    }

    pub fn errors(&self) -> u64 {
        self.total() - (0..self.labels.len()).map(|i| self.confusion[i][i]).sum::<u64>()
    }

    /// Misclassifications whose predicted index is within `radius` of the
    /// true index.
    pub fn errors_within(&self, radius: usize) -> u64 {
        let mut n = 0;
        for (t, row) in self.confusion.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                if p != t && t.abs_diff(p) <= radius {
                    n += c;
                }
            }
        }
        n
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["true\\predicted".to_owned()];
        header.extend(self.labels.iter().cloned());
        write_csv_record(&mut out, &header)?;
        for (label, row) in self.labels.iter().zip(&self.confusion) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(u64::to_string));
            write_csv_record(&mut out, &rec)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "accuracy {:.4} ({} / {})",
            self.accuracy,
            self.total() - self.errors(),
            self.total()
        )?;
        let w = self
            .labels
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(5);
        write!(f, "{:>w$}", "")?;
        for l in &self.labels {
            write!(f, " {l:>w$}")?;
        }
        writeln!(f)?;
        for (l, row) in self.labels.iter().zip(&self.confusion) {
            write!(f, "{l:>w$}")?;
            for c in row {
                write!(f, " {c:>w$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeckleStats {
    pub mean: f64,
    pub std: f64,
    pub contrast_ratio: f64,
    pub above_mean_fraction: f64,
}

/// Population statistics of an intensity sample.
pub fn intensity_stats(values: &[f64]) -> Result<SpeckleStats> {
    if values.is_empty() {
        return Err(Error::Empty("no intensity values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::Degenerate("zero mean intensity".into()));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let above = values.iter().filter(|&&v| v > mean).count() as f64 / n;
    Ok(SpeckleStats {
        mean,
        std,
        contrast_ratio: std / mean,
        above_mean_fraction: above,
    })
}

pub fn speckle_stats(frame: &SpeckleFrame) -> Result<SpeckleStats> {
    let v: Vec<f64> = frame.pixels().iter().map(|&p| f64::from(p)).collect();
    intensity_stats(&v)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn hv(d: usize, s: u64) -> Hypervector {
        Hypervector::random(d, s).unwrap()
    }

    /// Balanced hypervector: random permutation of D/2 ones.
    fn balanced(d: usize, s: u64) -> Hypervector {
        use crate::frame::SpeckleFrame;
        use crate::hv::{binarize_frame, BinarizePolicy};
        use rand::{seq::SliceRandom, SeedableRng};
        let mut px: Vec<u16> = (0..d as u16).collect();
        px.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(s));
        binarize_frame(&SpeckleFrame::new(1, d, px).unwrap(), &BinarizePolicy::default()).unwrap()
    }

    #[test]
    fn pearson_examples() {
        let v = [1.0, 4.0, 2.0, 8.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((pearson(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        // by hand: dx = (-1,0,1), dy = (-4/3,-1/3,5/3); sxy = 3, sxx = 2, syy = 42/9
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        let expect = 3.0 / (2.0f64.sqrt() * (42.0f64 / 9.0).sqrt());
        assert!((r - expect).abs() < 1e-12);
        assert!((r - 0.98198).abs() < 1e-5);
        assert!(matches!(
            pearson(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn hv_pearson_agrees_with_generic() {
        for s in 0..20 {
            let a = hv(300, s);
            let b = hv(300, 1000 + s);
            let fa: Vec<f64> = a.to_bits().iter().map(|&x| f64::from(u8::from(x))).collect();
            let fb: Vec<f64> = b.to_bits().iter().map(|&x| f64::from(u8::from(x))).collect();
            assert!((hv_pearson(&a, &b).unwrap() - pearson(&fa, &fb).unwrap()).abs() < 1e-12);
        }
        let z = Hypervector::zeros(10).unwrap();
        assert!(hv_pearson(&z, &hv(10, 1)).is_err());
    }

    #[test]
    fn balanced_pearson_is_hamming_identity() {
        let d = 1000;
        for s in 0..100 {
            let a = balanced(d, 2 * s);
            let b = balanced(d, 2 * s + 1);
            let fa: Vec<f64> = a.to_bits().iter().map(|&x| f64::from(u8::from(x))).collect();
            let fb: Vec<f64> = b.to_bits().iter().map(|&x| f64::from(u8::from(x))).collect();
            let ham = a.hamming(&b).unwrap() as f64;
            let identity = 1.0 - 2.0 * ham / d as f64;
            assert!((pearson(&fa, &fb).unwrap() - identity).abs() < 1e-12);
            assert!((hv_pearson(&a, &b).unwrap() - identity).abs() < 1e-12);
        }
    }

    #[test]
    fn contrast_examples() {
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(contrast(&eye), 1.0);
        assert_eq!(contrast(&[vec![0.3, 0.3], vec![0.3, 0.3]]), 0.0);
        let m = vec![vec![0.5, 0.44], vec![0.46, 0.48]];
        assert!((contrast(&m) - 0.06).abs() < 1e-12);
        let shifted: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|v| v + 0.25).collect()).collect();
        assert!((contrast(&shifted) - contrast(&m)).abs() < 1e-12);
    }

    /// Direct O(L^2 N_s^2) evaluation of the pair-excluded mean.
    fn direct_pair_mean(groups: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
        let l = groups.len();
        let n = groups[0].len();
        let mut out = vec![vec![0.0; l]; l];
        for i in 0..l {
            for j in 0..l {
                let mut s = 0.0;
                for k in 0..n {
                    for k2 in 0..n {
                        if k2 != k {
                            s += pearson(&groups[i][k], &groups[j][k2]).unwrap();
                        }
                    }
                }
                out[i][j] = s / (n * (n - 1)) as f64;
            }
        }
        out
    }

    fn frames_for(seed: u64, l: usize, n: usize, d: usize) -> Vec<Group<SpeckleFrame>> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..l)
            .map(|i| {
                let base: Vec<u16> = (0..d).map(|_| rng.random_range(0..1000)).collect();
                let items = (0..n)
                    .map(|_| {
                        let px = base.iter().map(|&b| b + rng.random_range(0..600)).collect();
                        SpeckleFrame::new(1, d, px).unwrap()
                    })
                    .collect();
                Group::new(format!("c{i}"), items)
            })
            .collect()
    }

    #[test]
    fn speckle_matrix_matches_direct_pairs() {
        let groups = frames_for(3, 3, 4, 200);
        let m = speckle_correlation_matrix(&groups).unwrap();
        let raw: Vec<Vec<Vec<f64>>> = groups
            .iter()
            .map(|g| {
                g.items
                    .iter()
                    .map(|f| f.pixels().iter().map(|&p| f64::from(p)).collect())
                    .collect()
            })
            .collect();
        let direct = direct_pair_mean(&raw);
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.values[i][j] - direct[i][j]).abs() < 1e-12);
            }
        }
        assert!(m.is_symmetric());
        assert!(m.mean_diagonal() > m.mean_off_diagonal());
    }

    #[test]
    fn speckle_matrix_identical_frames() {
        let f = SpeckleFrame::new(2, 3, vec![1, 5, 2, 9, 4, 4]).unwrap();
        let groups = vec![
            Group::new("a", vec![f.clone(), f.clone()]),
            Group::new("b", vec![f.clone(), f.clone()]),
        ];
        let m = speckle_correlation_matrix(&groups).unwrap();
        for row in &m.values {
            for v in row {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(m.contrast(), 0.0);
    }

    #[test]
    fn speckle_matrix_two_samples_is_single_pair() {
        let groups = frames_for(9, 1, 2, 100);
        let m = speckle_correlation_matrix(&groups).unwrap();
        let to_f = |f: &SpeckleFrame| f.pixels().iter().map(|&p| f64::from(p)).collect::<Vec<_>>();
        let p = pearson(&to_f(&groups[0].items[0]), &to_f(&groups[0].items[1])).unwrap();
        assert!((m.values[0][0] - p).abs() < 1e-12);
    }

    #[test]
    fn speckle_matrix_errors() {
        let mut groups = frames_for(1, 2, 3, 50);
        groups[1].items.pop();
        assert!(speckle_correlation_matrix(&groups).is_err());
        let flat = SpeckleFrame::new(1, 4, vec![3; 4]).unwrap();
        let g = vec![Group::new("a", vec![flat.clone(), flat])];
        assert!(matches!(
            speckle_correlation_matrix(&g),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn hv_matrix_examples() {
        let a = balanced(256, 1);
        let g = vec![
            Group::new("x", vec![a.clone(), a.clone()]),
            Group::new("y", vec![a.clone(), a.clone()]),
        ];
        let m = hv_correlation_matrix(&g).unwrap();
        assert!(m.values.iter().flatten().all(|v| (v - 1.0).abs() < 1e-12));

        let d = 10_000;
        let g: Vec<_> = (0..3)
            .map(|l| Group::new(format!("{l}"), (0..4).map(|k| hv(d, 10 * l + k)).collect()))
            .collect();
        let m = hv_correlation_matrix(&g).unwrap();
        assert!(m.is_symmetric());
        assert!(m.values.iter().flatten().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn hv_matrix_matches_direct_pairs() {
        let g: Vec<_> = (0..2)
            .map(|l| Group::new(format!("{l}"), (0..3).map(|k| balanced(128, 7 * l + k)).collect()))
            .collect();
        let m = hv_correlation_matrix(&g).unwrap();
        let raw: Vec<Vec<Vec<f64>>> = g
            .iter()
            .map(|g| {
                g.items
                    .iter()
                    .map(|h| h.to_bits().iter().map(|&b| f64::from(u8::from(b))).collect())
                    .collect()
            })
            .collect();
        let direct = direct_pair_mean(&raw);
        for i in 0..2 {
            for j in 0..2 {
                assert!((m.values[i][j] - direct[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn prototype_matrix_single_sample() {
        let a = balanced(512, 4);
        let memory = PrototypeMemory::train([(&a, "solo")]).unwrap();
        let m = prototype_correlation_matrix(&memory, &[Group::new("solo", vec![a.clone()])]).unwrap();
        assert!((m.values[0][0] - 1.0).abs() < 1e-12);
        assert_eq!(m.contrast(), 0.0);
        assert!(prototype_correlation_matrix(&memory, &[Group::new("nope", vec![a])]).is_err());
    }

    #[test]
    fn evaluation_report_invariants() {
        let labels = vec!["a".to_owned(), "b".to_owned(), "c".to_owned()];
        let pairs = [(0, 0), (0, 1), (1, 1), (2, 1), (2, 2), (2, 0)];
        let r = EvaluationReport::from_pairs(labels, &pairs).unwrap();
        assert_eq!(r.per_label_counts, vec![2, 1, 3]);
        assert_eq!(r.total(), 6);
        assert!((r.accuracy - 0.5).abs() < 1e-12);
        assert_eq!(r.errors(), 3);
        assert_eq!(r.errors_within(1), 2);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "true\\predicted,a,b,c");
        assert_eq!(text.lines().nth(3).unwrap(), "c,1,1,1");
    }

    #[test]
    fn stats_examples() {
        let flat = SpeckleFrame::new(1, 4, vec![7; 4]).unwrap();
        assert_eq!(speckle_stats(&flat).unwrap().contrast_ratio, 0.0);
        let zero = SpeckleFrame::new(1, 4, vec![0; 4]).unwrap();
        assert!(speckle_stats(&zero).is_err());
        let v = [1.0, 5.0, 2.0, 9.0, 3.0];
        let shifted: Vec<f64> = v.iter().map(|x| x + 100.0).collect();
        assert_eq!(
            intensity_stats(&v).unwrap().above_mean_fraction,
            intensity_stats(&shifted).unwrap().above_mean_fraction
        );
    }

    #[test]
    fn matrix_csv_layout() {
        let m = CorrelationMatrix {
            labels: vec!["L1".into(), "None".into()],
            values: vec![vec![1.0, 0.25], vec![0.25, 1.0]],
            kind: CorrelationKind::Hv,
        };
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "hv,L1,None\nL1,1.000000,0.250000\nNone,0.250000,1.000000\n"
        );
    }
}
