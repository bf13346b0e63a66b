//! Prototype memory: one majority-bundled prototype per class, nearest
//! prototype (Hamming) classification, and probabilistic recalibration.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::analytics::EvaluationReport;
use crate::error::{Error, Result};
use crate::hv::{bundle, merge_probabilistic, BundleAccumulator, Hypervector};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassEntry {
    label: String,
    prototype: Hypervector,
    accumulator: Option<BundleAccumulator>,
    n_samples: u32,
    merged: bool,
}

impl ClassEntry {
    /// Validates and assembles a class record (used when loading models).
    ///
    /// An unmerged class carrying an accumulator must have a prototype equal
    /// to the accumulator's majority and `n_added == n_samples`.
    pub fn from_parts(
        label: String,
        prototype: Hypervector,
        accumulator: Option<BundleAccumulator>,
        n_samples: u32,
        merged: bool,
    ) -> Result<Self> {
        if label.is_empty() {
            return Err(Error::Invalid("class label must be nonempty".into()));
        }
        if let Some(acc) = &accumulator {
            if acc.dim() != prototype.dim() {
                return Err(Error::DimensionMismatch {
                    expected: prototype.dim(),
                    found: acc.dim(),
                });
            }
            if acc.n_added() != n_samples {
                return Err(Error::Invalid(format!(
                    "class {label:?}: accumulator holds {} vectors, n_samples is {n_samples}",
                    acc.n_added()
                )));
            }
            if !merged && n_samples > 0 && acc.finalize()? != prototype {
                return Err(Error::Invalid(format!(
                    "class {label:?}: prototype disagrees with its accumulator"
                )));
            }
        }
        Ok(Self {
            label,
            prototype,
            accumulator,
            n_samples,
            merged,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn prototype(&self) -> &Hypervector {
        &self.prototype
    }

    pub fn accumulator(&self) -> Option<&BundleAccumulator> {
        self.accumulator.as_ref()
    }

    pub fn n_samples(&self) -> u32 {
        self.n_samples
    }

    /// True once the prototype has been through a probabilistic merge.
    pub fn merged(&self) -> bool {
        self.merged
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistance {
    pub label: String,
    pub hamming: u64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub predicted_label: String,
    pub predicted_index: usize,
    /// One entry per class, in registration order.
    pub distances: Vec<LabelDistance>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrototypeMemory {
    dim: usize,
    classes: Vec<ClassEntry>,
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

impl PrototypeMemory {
    pub fn from_classes(dim: usize, classes: Vec<ClassEntry>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, c) in classes.iter().enumerate() {
            check_dim(dim, c.prototype.dim())?;
            if seen.insert(c.label.as_str(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate label {:?}", c.label)));
            }
        }
        Ok(Self { dim, classes })
    }

    /// Bundles the samples of each label into its prototype.
    ///
    /// Classes are registered in order of first appearance.
    pub fn train<'a, I>(samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a Hypervector, &'a str)>,
    {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut accs: Vec<(&str, BundleAccumulator)> = Vec::new();
        let mut dim = None;
        for (hv, label) in samples {
            let d = *dim.get_or_insert(hv.dim());
            check_dim(d, hv.dim())?;
            if label.is_empty() {
                return Err(Error::Invalid("sample label must be nonempty".into()));
            }
            let slot = match index.get(label) {
                Some(&i) => i,
                None => {
                    index.insert(label, accs.len());
                    accs.push((label, BundleAccumulator::new(d)?));
                    accs.len() - 1
                }
            };
            accs[slot].1.accumulate(hv)?;
        }
        let dim = dim.ok_or(Error::Empty("no training samples"))?;
        let classes = accs
            .into_iter()
            .map(|(label, acc)| {
                Ok(ClassEntry {
                    label: label.to_owned(),
                    prototype: acc.finalize()?,
                    n_samples: acc.n_added(),
                    accumulator: Some(acc),
                    merged: false,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim, classes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.label.as_str()).collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.label == label)
    }

    pub fn get(&self, label: &str) -> Option<&ClassEntry> {
        self.classes.iter().find(|c| c.label == label)
    }

    /// Index of the nearest prototype; ties go to the earliest class.
    fn nearest(&self, query: &Hypervector) -> Result<(usize, Vec<u64>)> {
        if self.classes.is_empty() {
            return Err(Error::Empty("memory has no classes"));
        }
        check_dim(self.dim, query.dim())?;
        let dists = self
            .classes
            .iter()
            .map(|c| c.prototype.hamming(query))
            .collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        for (i, &d) in dists.iter().enumerate().skip(1) {
            if d < dists[best] {
                best = i;
            }
        }
        Ok((best, dists))
    }

    pub fn classify(&self, query: &Hypervector) -> Result<ClassificationResult> {
        let (best, dists) = self.nearest(query)?;
        let d = self.dim as f64;
        Ok(ClassificationResult {
            predicted_label: self.classes[best].label.clone(),
            predicted_index: best,
            distances: self
                .classes
                .iter()
                .zip(dists)
                .map(|(c, h)| LabelDistance {
                    label: c.label.clone(),
                    hamming: h,
                    normalized: h as f64 / d,
                })
                .collect(),
        })
    }

    /// Labels with normalized distances, nearest first (stable on ties).
    pub fn similarity_profile(&self, query: &Hypervector) -> Result<Vec<(String, f64)>> {
        let mut profile: Vec<(String, f64)> = self
            .classify(query)?
            .distances
            .into_iter()
            .map(|ld| (ld.label, ld.normalized))
            .collect();
        profile.sort_by(|a, b| a.1.total_cmp(&b.1));
        Ok(profile)
    }

    /// Accuracy and confusion matrix over a labelled test set.
    pub fn evaluate<'a, I>(&self, test: I) -> Result<EvaluationReport>
    where
        I: IntoIterator<Item = (&'a Hypervector, &'a str)>,
    {
        let test: Vec<(&Hypervector, usize)> = test
            .into_iter()
            .map(|(hv, label)| {
                self.index_of(label)
                    .map(|i| (hv, i))
                    .ok_or_else(|| Error::UnknownLabel(label.to_owned()))
            })
            .collect::<Result<_>>()?;
        let pairs = test
            .par_iter()
            .map(|&(hv, truth)| self.nearest(hv).map(|(pred, _)| (truth, pred)))
            .collect::<Result<Vec<_>>>()?;
        let labels = self.classes.iter().map(|c| c.label.clone()).collect();
        EvaluationReport::from_pairs(labels, &pairs)
    }

    /// Merges each listed class with a prototype bundled from its new samples.
    ///
    /// Every bit of a stored prototype is replaced by the new prototype's bit
    /// with probability `p`. The merge seed of a class is derived from
    /// `(seed, label)`, so recalibrating disjoint label sets commutes.
    /// Classes without new samples are untouched.
    pub fn recalibrate<'a, I>(&self, new_samples: I, p: f64, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a Hypervector, &'a str)>,
    {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Probability(p));
        }
        let mut grouped: Vec<Vec<&Hypervector>> = vec![Vec::new(); self.classes.len()];
        for (hv, label) in new_samples {
            let i = self
                .index_of(label)
                .ok_or_else(|| Error::UnknownLabel(label.to_owned()))?;
            check_dim(self.dim, hv.dim())?;
            grouped[i].push(hv);
        }
        let mut out = self.clone();
        for (class, fresh) in out.classes.iter_mut().zip(grouped) {
            if fresh.is_empty() {
                continue;
            }
            let new_proto = bundle(fresh.iter().copied())?;
            let class_seed = derive_seed(seed, class.label.as_bytes());
            class.prototype = merge_probabilistic(&class.prototype, &new_proto, p, class_seed)?;
            class.n_samples = class.n_samples.saturating_add(fresh.len() as u32);
            class.accumulator = None;
            class.merged = true;
        }
        Ok(out)
    }

    /// Adds samples to unmerged classes (or registers new labels) exactly,
    /// through the retained accumulators.
    pub fn extend<'a, I>(&self, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a Hypervector, &'a str)>,
    {
        let mut out = self.clone();
        let mut touched = vec![false; out.classes.len()];
        for (hv, label) in samples {
            check_dim(self.dim, hv.dim())?;
            let i = match out.index_of(label) {
                Some(i) => i,
                None => {
                    out.classes.push(ClassEntry {
                        label: label.to_owned(),
                        prototype: Hypervector::zeros(self.dim)?,
                        accumulator: Some(BundleAccumulator::new(self.dim)?),
                        n_samples: 0,
                        merged: false,
                    });
                    touched.push(false);
                    out.classes.len() - 1
                }
            };
            let class = &mut out.classes[i];
            let acc = class.accumulator.as_mut().ok_or_else(|| {
                Error::Invalid(format!(
                    "class {label:?} was merged and has no exact accumulator"
                ))
            })?;
            acc.accumulate(hv)?;
            class.n_samples = acc.n_added();
            touched[i] = true;
        }
        for (class, t) in out.classes.iter_mut().zip(touched) {
            if t {
                class.prototype = class.accumulator.as_ref().expect("touched").finalize()?;
            }
        }
        Ok(out)
    }
}
