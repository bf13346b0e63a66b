//! Dataset manifest: a CSV table of frames with labels and train/test split.
//!
//! ```text
//! # dataset_seed=7
//! # scenario_hash=3f2a...
//! frame_path,label,split,sample_index
//! frames/000_00000.pgm,L1,train,0
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, domain, keyed_rng};

pub const MANIFEST_HEADER: &str = "frame_path,label,split,sample_index";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split token {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub frame_path: String,
    pub label: String,
    pub split: Split,
    pub sample_index: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub dataset_seed: u64,
    pub scenario_hash: String,
    pub records: Vec<ManifestRecord>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    frame_path: String,
    label: String,
    split: String,
    sample_index: u64,
}

impl DatasetManifest {
    /// Checks unique frame paths and nonempty labels.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if r.label.is_empty() {
                return Err(Error::Invalid(format!("empty label for {:?}", r.frame_path)));
            }
            if !seen.insert(r.frame_path.as_str()) {
                return Err(Error::Invalid(format!("duplicate frame path {:?}", r.frame_path)));
            }
        }
        Ok(())
    }

    /// Distinct labels in order of first appearance.
    pub fn labels(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.label.as_str()))
            .map(|r| r.label.as_str())
            .collect()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn to_csv(&self) -> Result<String> {
        self.validate()?;
        let mut out = format!(
            "# dataset_seed={}\n# scenario_hash={}\n",
            self.dataset_seed, self.scenario_hash
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(Row {
                frame_path: r.frame_path.clone(),
                label: r.label.clone(),
                split: r.split.to_string(),
                sample_index: r.sample_index,
            })
            .map_err(|e| Error::Invalid(e.to_string()))?;
        }
        let body = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
        if self.records.is_empty() {
            out.push_str(MANIFEST_HEADER);
            out.push('\n');
        } else {
            out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        }
        Ok(out)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut manifest = DatasetManifest::default();
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            let Some(meta) = line.strip_prefix('#') else {
                break;
            };
            body_start += line.len();
            if let Some((k, v)) = meta.trim().split_once('=') {
                match k.trim() {
                    "dataset_seed" => {
                        manifest.dataset_seed = v
                            .trim()
                            .parse()
                            .map_err(|_| Error::format(path, format!("bad dataset_seed {v:?}")))?;
                    }
                    "scenario_hash" => manifest.scenario_hash = v.trim().to_owned(),
                    _ => {}
                }
            }
        }
        let body = &text[body_start..];
        let first = body.lines().next().unwrap_or("");
        if first.trim_end_matches('\r') != MANIFEST_HEADER {
            return Err(Error::format(
                path,
                format!("expected header row {MANIFEST_HEADER:?}"),
            ));
        }
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
            let split = row
                .split
                .parse()
                .map_err(|e: Error| Error::format(path, e.to_string()))?;
            manifest.records.push(ManifestRecord {
                frame_path: row.frame_path,
                label: row.label,
                split,
                sample_index: row.sample_index,
            });
        }
        manifest
            .validate()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(manifest)
    }
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    write_atomic(path, manifest.to_csv()?.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "not UTF-8"))?;
    if text.trim().is_empty() {
        return Err(Error::format(path, "empty manifest"));
    }
    DatasetManifest::parse(&text, path)
}

/// Stratified split: within each label exactly `round(fraction * n)` records
/// become `train`, chosen by a shuffle keyed on `(seed, label)`. Record order
/// is preserved.
pub fn split_dataset(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut by_label: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        by_label.entry(r.label.as_str()).or_default().push(i);
    }
    let mut out = manifest.clone();
    for (label, mut idx) in by_label {
        let n_train = (train_fraction * idx.len() as f64).round() as usize;
        let mut rng = keyed_rng(derive_seed(seed, label.as_bytes()), domain::SPLIT, 0);
        idx.shuffle(&mut rng);
        for (rank, &i) in idx.iter().enumerate() {
            out.records[i].split = if rank < n_train { Split::Train } else { Split::Test };
        }
    }
    Ok(out)
}
