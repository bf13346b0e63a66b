//! Scenario files: everything needed to regenerate a simulated dataset.
//!
//! ```toml
//! name = "five-position"
//! seed = 7
//! samples_per_label = 100
//! train_fraction = 0.8
//!
//! [sim]
//! modes = 256
//! height = 500
//! width = 500
//! model_seed = 1
//!
//! [noise]
//! read_noise_sigma = 0.05
//!
//! [drift]          # optional; environment state is `steps` walk steps from rest
//! rate = 0.6
//! seed = 11
//! steps = 16
//!
//! [jitter]         # per-sample stimulus noise
//! position = 0.004 # absolute std
//! depth = 0.05     # relative std
//!
//! [[labels]]
//! name = "L1"
//! position = 0.15
//! depth = 8.0
//! kernel_width = 0.05
//!
//! [position_grid]  # optional; appends labels "0".."count-1"
//! count = 51
//! start = 0.0
//! end = 1.0
//! depth = 8.0
//! kernel_width = 0.03
//!
//! [experiment]
//! n_list = [5, 10, 25]
//! p_list = [0.5]
//! n_new_list = [10]
//! ```

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frame::SpeckleFrame;
use crate::hv::{BinarizeMode, BinarizePolicy, MAX_DIM};
use crate::io::{
    split_dataset, write_atomic, write_frame, write_manifest, DatasetManifest, ManifestRecord, Split,
    FRAMES_DIR, MANIFEST_FILE,
};
use crate::rng::{derive_seed, domain, keyed_rng};
use crate::sim::{render_batch, DriftState, NoiseSpec, RenderRequest, ScatterModel, StimulusSpec};

pub const SCENARIO_FILE: &str = "scenario.toml";

/// Frames rendered per batch while generating.
const RENDER_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub samples_per_label: u32,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    pub sim: SimConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub jitter: JitterConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub labels: Vec<LabelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_grid: Option<PositionGrid>,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub modes: usize,
    pub height: usize,
    pub width: usize,
    pub model_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub read_noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    #[serde(default)]
    pub rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterConfig {
    #[serde(default)]
    pub position: f64,
    #[serde(default)]
    pub depth: f64,
    #[serde(default)]
    pub texture_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    #[serde(default)]
    pub mode: BinarizeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelConfig {
    pub name: String,
    #[serde(default = "half")]
    pub position: f64,
    #[serde(default)]
    pub depth: f64,
    #[serde(default = "default_kernel_width")]
    pub kernel_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture_seed: Option<u64>,
    #[serde(default)]
    pub texture_gain: f64,
}

fn half() -> f64 {
    0.5
}

fn default_kernel_width() -> f64 {
    0.05
}

impl LabelConfig {
    pub fn stimulus(&self) -> StimulusSpec {
        StimulusSpec {
            position: self.position,
            depth: self.depth,
            kernel_width: self.kernel_width,
            texture_seed: self.texture_seed,
            texture_gain: self.texture_gain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionGrid {
    pub count: u32,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "one")]
    pub end: f64,
    pub depth: f64,
    #[serde(default = "default_kernel_width")]
    pub kernel_width: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub p_list: Vec<f64>,
    #[serde(default)]
    pub n_new_list: Vec<usize>,
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// SHA-256 (hex) of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn dim(&self) -> usize {
        self.sim.height * self.sim.width
    }

    pub fn binarize_policy(&self) -> BinarizePolicy {
        BinarizePolicy {
            mode: self.encoder.mode,
            ..BinarizePolicy::default()
        }
    }

    /// Explicit labels followed by the position grid, if any.
    pub fn all_labels(&self) -> Vec<LabelConfig> {
        let mut out = self.labels.clone();
        if let Some(g) = &self.position_grid {
            for i in 0..g.count {
                let position = if g.count == 1 {
                    g.start
                } else {
                    g.start + (g.end - g.start) * f64::from(i) / f64::from(g.count - 1)
                };
                out.push(LabelConfig {
                    name: i.to_string(),
                    position,
                    depth: g.depth,
                    kernel_width: g.kernel_width,
                    texture_seed: None,
                    texture_gain: 0.0,
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.name.trim().is_empty() {
            return cfg("scenario name is empty".into());
        }
        if self.samples_per_label == 0 {
            return cfg("samples_per_label must be positive".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return cfg(format!("train_fraction {} must lie in (0, 1)", self.train_fraction));
        }
        let s = &self.sim;
        if s.modes < 2 {
            return cfg(format!("sim.modes must be >= 2, got {}", s.modes));
        }
        match s.height.checked_mul(s.width) {
            Some(d) if (2..=MAX_DIM).contains(&d) => {}
            _ => {
                return Err(Error::DimensionOutOfRange {
                    dim: s.height.saturating_mul(s.width),
                    max: MAX_DIM,
                })
            }
        }
        nonneg("noise.read_noise_sigma", self.noise.read_noise_sigma)?;
        nonneg("drift.rate", self.drift.rate)?;
        nonneg("jitter.position", self.jitter.position)?;
        nonneg("jitter.depth", self.jitter.depth)?;
        nonneg("jitter.texture_gain", self.jitter.texture_gain)?;
        if let Some(g) = &self.position_grid {
            if g.count == 0 {
                return cfg("position_grid.count must be positive".into());
            }
            for (k, v) in [("start", g.start), ("end", g.end)] {
                if !(0.0..=1.0).contains(&v) {
                    return cfg(format!("position_grid.{k} {v} outside [0, 1]"));
                }
            }
        }
        let labels = self.all_labels();
        if labels.is_empty() {
            return cfg("scenario declares no labels".into());
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if l.name.is_empty() {
                return cfg("empty label name".into());
            }
            if !seen.insert(l.name.as_str()) {
                return cfg(format!("duplicate label {:?}", l.name));
            }
            l.stimulus()
                .validate()
                .map_err(|e| Error::Config(format!("label {:?}: {e}", l.name)))?;
        }
        let e = &self.experiment;
        if e.n_list.contains(&0) || e.n_new_list.contains(&0) {
            return cfg("experiment sample counts must be positive".into());
        }
        if let Some(p) = e.p_list.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return cfg(format!("experiment p {p} outside [0, 1]"));
        }
        Ok(())
    }
}

/// One frame of a scenario: its label, jittered stimulus and noise seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub label_index: usize,
    pub label: String,
    pub sample_index: u64,
    pub stimulus: StimulusSpec,
    pub frame_seed: u64,
}

impl SamplePlan {
    pub fn frame_path(&self) -> String {
        format!("{FRAMES_DIR}/{:03}_{:05}.pgm", self.label_index, self.sample_index)
    }
}

/// A validated scenario with its scattering model and environment built.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    labels: Vec<LabelConfig>,
    model: ScatterModel,
    drift: DriftState,
    noise: NoiseSpec,
}

impl Scenario {
    pub fn build(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let s = &config.sim;
        let model = ScatterModel::build(s.modes, s.height, s.width, s.model_seed)?;
        Self::with_model(config, model)
    }

    /// Reuses an already built model; its parameters must match the config.
    pub fn with_model(config: ScenarioConfig, model: ScatterModel) -> Result<Self> {
        config.validate()?;
        let s = &config.sim;
        if (model.n_modes(), model.height(), model.width(), model.model_seed())
            != (s.modes, s.height, s.width, s.model_seed)
        {
            return Err(Error::Config("scatter model does not match [sim] settings".into()));
        }
        let drift = DriftState::new(s.modes, config.drift.rate, config.drift.seed)?.advance(config.drift.steps);
        let noise = NoiseSpec {
            read_noise_sigma: config.noise.read_noise_sigma,
        };
        Ok(Self {
            labels: config.all_labels(),
            config,
            model,
            drift,
            noise,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn model(&self) -> &ScatterModel {
        &self.model
    }

    pub fn into_model(self) -> ScatterModel {
        self.model
    }

    pub fn drift(&self) -> &DriftState {
        &self.drift
    }

    pub fn labels(&self) -> &[LabelConfig] {
        &self.labels
    }

    pub fn label_names(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.name.clone()).collect()
    }

    /// Jittered stimulus for sample `s` of label `l`.
    pub fn sample(&self, label_index: usize, sample_index: u64) -> SamplePlan {
        let label = &self.labels[label_index];
        let seed = self.config.seed;
        let label_seed = derive_seed(seed, label.name.as_bytes());
        let mut rng = keyed_rng(label_seed, domain::JITTER, sample_index);
        let mut z = || -> f64 { rng.sample(StandardNormal) };
        let j = &self.config.jitter;
        let mut stimulus = label.stimulus();
        stimulus.position = (stimulus.position + j.position * z()).clamp(0.0, 1.0);
        stimulus.depth *= (1.0 + j.depth * z()).max(0.0);
        stimulus.texture_gain *= (1.0 + j.texture_gain * z()).max(0.0);
        SamplePlan {
            label_index,
            label: label.name.clone(),
            sample_index,
            stimulus,
            frame_seed: derive_seed(label_seed, &sample_index.to_le_bytes()),
        }
    }

    /// All samples, label-major.
    pub fn plan(&self) -> Vec<SamplePlan> {
        (0..self.labels.len())
            .flat_map(|l| (0..u64::from(self.config.samples_per_label)).map(move |s| (l, s)))
            .map(|(l, s)| self.sample(l, s))
            .collect()
    }

    /// Manifest of [`Self::plan`] with the stratified train/test split applied.
    pub fn manifest(&self) -> Result<DatasetManifest> {
        let records = self
            .plan()
            .iter()
            .map(|p| ManifestRecord {
                frame_path: p.frame_path(),
                label: p.label.clone(),
                split: Split::Train,
                sample_index: p.sample_index,
            })
            .collect();
        let m = DatasetManifest {
            dataset_seed: self.config.seed,
            scenario_hash: self.config.hash(),
            records,
        };
        split_dataset(&m, self.config.train_fraction, self.config.seed)
    }

    pub fn render(&self, plans: &[SamplePlan]) -> Result<Vec<SpeckleFrame>> {
        let requests: Vec<RenderRequest<'_>> = plans
            .iter()
            .map(|p| RenderRequest {
                stimulus: &p.stimulus,
                drift: &self.drift,
                frame_seed: p.frame_seed,
            })
            .collect();
        render_batch(&self.model, &requests, &self.noise)
    }

    /// Renders `plans` in batches, handing each frame to `f` and dropping it.
    pub fn for_each_frame<F>(&self, plans: &[SamplePlan], mut f: F) -> Result<()>
    where
        F: FnMut(&SamplePlan, SpeckleFrame) -> Result<()>,
    {
        for chunk in plans.chunks(RENDER_BATCH) {
            for (p, frame) in chunk.iter().zip(self.render(chunk)?) {
                f(p, frame)?;
            }
        }
        Ok(())
    }

    /// Writes `frames/*.pgm`, `manifest.csv` and `scenario.toml` under `out_dir`.
    pub fn generate(&self, out_dir: &Path) -> Result<DatasetManifest> {
        let frames = out_dir.join(FRAMES_DIR);
        std::fs::create_dir_all(&frames).map_err(|e| Error::io(&frames, e))?;
        let manifest = self.manifest()?;
        self.for_each_frame(&self.plan(), |p, frame| write_frame(&out_dir.join(p.frame_path()), &frame))?;
        write_atomic(&out_dir.join(SCENARIO_FILE), self.config.to_toml().as_bytes())?;
        write_manifest(&out_dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}

pub fn generate_dataset(config: &ScenarioConfig, out_dir: &Path) -> Result<DatasetManifest> {
    Scenario::build(config.clone())?.generate(out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIVE: &str = r#"
name = "five"
seed = 3
samples_per_label = 4

[sim]
modes = 16
height = 8
width = 8
model_seed = 1

[jitter]
position = 0.01
depth = 0.1

[[labels]]
name = "L1"
position = 0.2
depth = 6.0

[[labels]]
name = "None"
"#;

    fn five() -> ScenarioConfig {
        ScenarioConfig::from_toml(FIVE).unwrap()
    }

    #[test]
    fn parses_defaults() {
        let c = five();
        assert_eq!(c.train_fraction, 0.8);
        assert_eq!(c.labels[1].depth, 0.0);
        assert_eq!(c.labels[1].kernel_width, 0.05);
        assert_eq!(c.encoder.mode, BinarizeMode::ExactBalance);
        assert_eq!(ScenarioConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn grid_labels() {
        let mut c = five();
        c.labels.clear();
        c.position_grid = Some(PositionGrid {
            count: 51,
            start: 0.0,
            end: 1.0,
            depth: 5.0,
            kernel_width: 0.03,
        });
        c.validate().unwrap();
        let labels = c.all_labels();
        assert_eq!(labels.len(), 51);
        assert_eq!(labels[0].name, "0");
        assert_eq!(labels[50].name, "50");
        assert!((labels[25].position - 0.5).abs() < 1e-12);
        assert_eq!(labels[50].position, 1.0);
    }

    #[test]
    fn rejects_invalid() {
        let bad = |edit: &dyn Fn(&mut ScenarioConfig)| {
            let mut c = five();
            edit(&mut c);
            c.validate().unwrap_err()
        };
        assert!(matches!(bad(&|c| c.labels.clear()), Error::Config(_)));
        assert!(matches!(bad(&|c| c.samples_per_label = 0), Error::Config(_)));
        assert!(matches!(bad(&|c| c.labels[1].name = "L1".into()), Error::Config(_)));
        assert!(matches!(bad(&|c| c.labels[0].position = 1.5), Error::Config(_)));
        assert!(matches!(bad(&|c| c.train_fraction = 1.0), Error::Config(_)));
        assert!(matches!(bad(&|c| c.experiment.p_list = vec![1.2]), Error::Config(_)));
        assert!(matches!(bad(&|c| c.sim.height = 1 << 24), Error::DimensionOutOfRange { .. }));
        assert!(ScenarioConfig::from_toml("name = 1").is_err());
        assert!(ScenarioConfig::from_toml(&format!("{FIVE}\nbogus = 2")).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = five();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn plan_is_deterministic_and_jittered() {
        let s = Scenario::build(five()).unwrap();
        let p = s.plan();
        assert_eq!(p.len(), 8);
        assert_eq!(p, s.plan());
        assert_ne!(p[0].stimulus, p[1].stimulus);
        assert!((p[0].stimulus.position - 0.2).abs() < 0.06);
        assert_eq!(p[4].stimulus.depth, 0.0);
        assert_eq!(p[5].frame_path(), "frames/001_00001.pgm");
        let seeds: HashSet<u64> = p.iter().map(|x| x.frame_seed).collect();
        assert_eq!(seeds.len(), 8);
    }

    #[test]
    fn generate_is_byte_identical() {
        let c = five();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m = generate_dataset(&c, a.path()).unwrap();
        generate_dataset(&c, b.path()).unwrap();
        assert_eq!(m.records.len(), 8);
        assert_eq!(m.scenario_hash, c.hash());
        for name in [MANIFEST_FILE, SCENARIO_FILE, "frames/000_00003.pgm", "frames/001_00000.pgm"] {
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap(),
                "{name}"
            );
        }
        let back = crate::io::read_manifest(&a.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.split(Split::Train).count(), 6);
    }
}
