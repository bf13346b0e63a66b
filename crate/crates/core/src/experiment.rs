//! Experiment protocols shared by the command-line harness and tests:
//! training on a split, the N sweep, recalibration grids and correlation
//! analysis.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::analytics::{
    hv_correlation_matrix, prototype_correlation_matrix, speckle_correlation_matrix_with, CorrelationMatrix,
    EvaluationReport, Group,
};
use crate::error::{Error, Result};
use crate::frame::SpeckleFrame;
use crate::hv::{binarize_frame, BinarizePolicy, Hypervector};
use crate::io::{read_frame, read_manifest, DatasetManifest, Split, MANIFEST_FILE};
use crate::memory::PrototypeMemory;
use crate::scenario::{SamplePlan, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub label: String,
    pub sample_index: u64,
    pub split: Split,
    pub hv: Hypervector,
}

/// Hypervectors of a whole dataset, labels in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    labels: Vec<String>,
    samples: Vec<EncodedSample>,
}

impl EncodedDataset {
    pub fn new(samples: Vec<EncodedSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("dataset has no samples"));
        }
        let dim = samples[0].hv.dim();
        let mut labels: Vec<String> = Vec::new();
        for s in &samples {
            if s.hv.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.hv.dim(),
                });
            }
            if !labels.contains(&s.label) {
                labels.push(s.label.clone());
            }
        }
        Ok(Self { labels, samples })
    }

    /// Reads and binarizes every frame listed in `<dir>/manifest.csv`.
    pub fn load(dir: &Path, policy: &BinarizePolicy) -> Result<Self> {
        let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
        Self::load_manifest(dir, &manifest, policy)
    }

    pub fn load_manifest(dir: &Path, manifest: &DatasetManifest, policy: &BinarizePolicy) -> Result<Self> {
        let samples = manifest
            .records
            .par_iter()
            .map(|r| {
                let frame = read_frame(&dir.join(&r.frame_path))?;
                Ok(EncodedSample {
                    label: r.label.clone(),
                    sample_index: r.sample_index,
                    split: r.split,
                    hv: binarize_frame(&frame, policy)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }

    /// Renders and encodes a scenario in memory, never holding more than one
    /// render batch of frames. `keep` sees every frame before it is dropped.
    pub fn simulate<F>(scenario: &Scenario, mut keep: F) -> Result<Self>
    where
        F: FnMut(&SamplePlan, &SpeckleFrame),
    {
        let manifest = scenario.manifest()?;
        let plan = scenario.plan();
        let policy = scenario.config().binarize_policy();
        let mut samples = Vec::with_capacity(plan.len());
        scenario.for_each_frame(&plan, |p, frame| {
            keep(p, &frame);
            samples.push(EncodedSample {
                label: p.label.clone(),
                sample_index: p.sample_index,
                split: Split::Train,
                hv: binarize_frame(&frame, &policy)?,
            });
            Ok(())
        })?;
        for (s, r) in samples.iter_mut().zip(&manifest.records) {
            s.split = r.split;
        }
        Self::new(samples)
    }

    pub fn dim(&self) -> usize {
        self.samples[0].hv.dim()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn samples(&self) -> &[EncodedSample] {
        &self.samples
    }

    pub fn split(&self, split: Split) -> Vec<(&Hypervector, &str)> {
        self.samples
            .iter()
            .filter(|s| s.split == split)
            .map(|s| (&s.hv, s.label.as_str()))
            .collect()
    }

    /// The first `per_class` train samples of every label, by sample index.
    pub fn train_prefix(&self, per_class: usize) -> Result<Vec<(&Hypervector, &str)>> {
        let mut out = Vec::with_capacity(per_class * self.labels.len());
        for label in &self.labels {
            let mut train: Vec<&EncodedSample> = self
                .samples
                .iter()
                .filter(|s| s.split == Split::Train && &s.label == label)
                .collect();
            if train.len() < per_class {
                return Err(Error::Invalid(format!(
                    "label {label:?} has {} train samples, {per_class} requested",
                    train.len()
                )));
            }
            train.sort_by_key(|s| s.sample_index);
            out.extend(train[..per_class].iter().map(|s| (&s.hv, s.label.as_str())));
        }
        Ok(out)
    }

    /// All samples per label, by sample index, truncated to the smallest
    /// label's count so every group has the same size.
    pub fn groups(&self) -> Vec<Group<Hypervector>> {
        let mut groups: Vec<Group<Hypervector>> = self
            .labels
            .iter()
            .map(|label| {
                let mut v: Vec<&EncodedSample> = self.samples.iter().filter(|s| &s.label == label).collect();
                v.sort_by_key(|s| s.sample_index);
                Group::new(label.clone(), v.into_iter().map(|s| s.hv.clone()).collect())
            })
            .collect();
        let n = groups.iter().map(|g| g.items.len()).min().unwrap_or(0);
        for g in &mut groups {
            g.items.truncate(n);
        }
        groups
    }

    pub fn train(&self) -> Result<PrototypeMemory> {
        let train = self.split(Split::Train);
        if train.is_empty() {
            return Err(Error::Empty("train split is empty"));
        }
        PrototypeMemory::train(train)
    }

    pub fn evaluate(&self, memory: &PrototypeMemory) -> Result<EvaluationReport> {
        let test = self.split(Split::Test);
        if test.is_empty() {
            return Err(Error::Empty("test split is empty"));
        }
        if memory.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: memory.dim(),
                found: self.dim(),
            });
        }
        memory.evaluate(test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub per_class: usize,
    pub accuracy: f64,
}

/// For each total `N`, trains on the first `N / L` train samples per class
/// and evaluates on the full test split.
pub fn sweep_n(dataset: &EncodedDataset, n_list: &[usize]) -> Result<Vec<SweepRow>> {
    let l = dataset.labels().len();
    n_list
        .iter()
        .map(|&n| {
            let per_class = n / l;
            if per_class == 0 {
                return Err(Error::Invalid(format!("N = {n} gives no samples per class for {l} labels")));
            }
            let memory = PrototypeMemory::train(dataset.train_prefix(per_class)?)?;
            Ok(SweepRow {
                n,
                per_class,
                accuracy: dataset.evaluate(&memory)?.accuracy,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecalRow {
    pub p: f64,
    pub n_new: usize,
    pub acc_before: f64,
    pub acc_after: f64,
}

/// Recalibrates with the first `n_new` train samples per class of the new
/// dataset and evaluates before and after on its test split.
pub fn recalibrate_once(
    memory: &PrototypeMemory,
    new_data: &EncodedDataset,
    p: f64,
    n_new: usize,
    seed: u64,
) -> Result<(RecalRow, PrototypeMemory)> {
    let acc_before = new_data.evaluate(memory)?.accuracy;
    let updated = memory.recalibrate(new_data.train_prefix(n_new)?, p, seed)?;
    let acc_after = new_data.evaluate(&updated)?.accuracy;
    Ok((
        RecalRow {
            p,
            n_new,
            acc_before,
            acc_after,
        },
        updated,
    ))
}

/// Every `(p, n_new)` combination, `p` outermost.
pub fn recalibration_grid(
    memory: &PrototypeMemory,
    new_data: &EncodedDataset,
    p_list: &[f64],
    n_new_list: &[usize],
    seed: u64,
) -> Result<Vec<RecalRow>> {
    let mut rows = Vec::with_capacity(p_list.len() * n_new_list.len());
    for &p in p_list {
        for &n in n_new_list {
            rows.push(recalibrate_once(memory, new_data, p, n, seed)?.0);
        }
    }
    Ok(rows)
}

/// Speckle, hypervector and prototype correlation matrices of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub speckle: CorrelationMatrix,
    pub hv: CorrelationMatrix,
    pub prototype: CorrelationMatrix,
}

impl Analysis {
    /// `fetch(l, k)` yields the `k`-th frame (by sample index) of label `l`,
    /// matching the order of [`EncodedDataset::groups`].
    pub fn compute<F>(dataset: &EncodedDataset, memory: &PrototypeMemory, fetch: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Result<SpeckleFrame>,
    {
        let groups = dataset.groups();
        let n_s = groups[0].items.len();
        let labels = dataset.labels().to_vec();
        Ok(Self {
            speckle: speckle_correlation_matrix_with(labels, n_s, fetch)?,
            hv: hv_correlation_matrix(&groups)?,
            prototype: prototype_correlation_matrix(memory, &groups)?,
        })
    }

    /// Reads frames from a dataset directory on demand.
    pub fn from_dir(dir: &Path, dataset: &EncodedDataset, memory: &PrototypeMemory) -> Result<Self> {
        let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
        let paths: Vec<Vec<String>> = dataset
            .labels()
            .iter()
            .map(|label| {
                let mut r: Vec<_> = manifest.records.iter().filter(|r| &r.label == label).collect();
                r.sort_by_key(|r| r.sample_index);
                r.into_iter().map(|r| r.frame_path.clone()).collect()
            })
            .collect();
        Self::compute(dataset, memory, |l, k| read_frame(&dir.join(&paths[l][k])))
    }

    /// `(name, contrast)` for the speckle, hypervector and prototype matrices.
    pub fn contrasts(&self) -> [(&'static str, f64); 3] {
        [&self.speckle, &self.hv, &self.prototype].map(|m| (m.kind.name(), m.contrast()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e))
}

fn write_rows<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    for r in rows {
        out.write_record(&r).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    write_rows(
        w,
        &["n", "per_class", "accuracy"],
        rows.iter()
            .map(|r| vec![r.n.to_string(), r.per_class.to_string(), format!("{:.6}", r.accuracy)]),
    )
}

pub fn write_recal_csv<W: Write>(w: W, rows: &[RecalRow]) -> Result<()> {
    write_rows(
        w,
        &["p", "n_new", "acc_before", "acc_after"],
        rows.iter().map(|r| {
            vec![
                r.p.to_string(),
                r.n_new.to_string(),
                format!("{:.6}", r.acc_before),
                format!("{:.6}", r.acc_after),
            ]
        }),
    )
}

pub fn write_contrast_csv<W: Write>(w: W, analysis: &Analysis) -> Result<()> {
    write_rows(
        w,
        &["matrix", "contrast"],
        analysis
            .contrasts()
            .iter()
            .map(|(name, c)| vec![(*name).to_owned(), format!("{c:.6}")]),
    )
}
