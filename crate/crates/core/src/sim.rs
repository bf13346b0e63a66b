//! Speckle sensor simulator.
//!
//! A scattering medium is modelled as a random complex transmission matrix
//! `T` (`D` detector pixels by `M` input modes, i.i.d. circular Gaussian
//! entries with `E|T_jk|^2 = 1/M`). The input field is phase-only,
//! `a_k = exp(i (base_k + drift_k + delta_k))`, where `delta` is the phase
//! imprinted by a touch or texture stimulus. Pixel intensity is
//! `|sum_k T_jk a_k|^2`, which gives fully developed speckle (exponential
//! intensity statistics, unit contrast) for any stimulus.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::SpeckleFrame;
use crate::hv::MAX_DIM;
use crate::rng::{domain, keyed_rng};

/// Frames rendered together by the transmission kernel.
const LANES: usize = 16;
/// Pixels per parallel work item.
const PIXEL_CHUNK: usize = 512;
/// Quantile mapped to full scale by [`quantize`].
pub const SCALE_QUANTILE: f64 = 0.999;

#[derive(Debug, Clone)]
pub struct ScatterModel {
    n_modes: usize,
    height: usize,
    width: usize,
    model_seed: u64,
    // pixel-major: entry (j, k) at j * n_modes + k
    t_re: Vec<f32>,
    t_im: Vec<f32>,
    base_phase: Vec<f64>,
}

impl PartialEq for ScatterModel {
    fn eq(&self, other: &Self) -> bool {
        self.n_modes == other.n_modes
            && self.height == other.height
            && self.width == other.width
            && self.model_seed == other.model_seed
            && self.t_re.iter().map(|v| v.to_bits()).eq(other.t_re.iter().map(|v| v.to_bits()))
            && self.t_im.iter().map(|v| v.to_bits()).eq(other.t_im.iter().map(|v| v.to_bits()))
            && self.base_phase.iter().map(|v| v.to_bits()).eq(other.base_phase.iter().map(|v| v.to_bits()))
    }
}

impl ScatterModel {
    /// Draws the transmission matrix and base phases from `model_seed`.
    ///
    /// Row `j` of the matrix comes from its own keyed stream, so generation
    /// is parallel and still bit-reproducible.
    pub fn build(n_modes: usize, height: usize, width: usize, model_seed: u64) -> Result<Self> {
        if n_modes < 2 {
            return Err(Error::Invalid(format!("need at least 2 modes, got {n_modes}")));
        }
        let d = height
            .checked_mul(width)
            .ok_or(Error::DimensionOutOfRange { dim: usize::MAX, max: MAX_DIM })?;
        if !(2..=MAX_DIM).contains(&d) {
            return Err(Error::DimensionOutOfRange { dim: d, max: MAX_DIM });
        }
        let sd = (0.5 / n_modes as f64).sqrt();
        let mut t_re = vec![0f32; d * n_modes];
        let mut t_im = vec![0f32; d * n_modes];
        t_re.par_chunks_mut(n_modes)
            .zip(t_im.par_chunks_mut(n_modes))
            .enumerate()
            .for_each(|(j, (re, im))| {
                let mut rng = keyed_rng(model_seed, domain::TRANSMISSION, j as u64);
                for (r, i) in re.iter_mut().zip(im.iter_mut()) {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    *r = (a * sd) as f32;
                    *i = (b * sd) as f32;
                }
            });
        let mut rng = keyed_rng(model_seed, domain::BASE_PHASE, 0);
        let base_phase = (0..n_modes).map(|_| rng.random::<f64>() * TAU).collect();
        Ok(Self {
            n_modes,
            height,
            width,
            model_seed,
            t_re,
            t_im,
            base_phase,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.height * self.width
    }

    pub fn model_seed(&self) -> u64 {
        self.model_seed
    }

    pub fn base_phase(&self) -> &[f64] {
        &self.base_phase
    }

    /// `(re, im)` of the transmission entry for pixel `j`, mode `k`.
    pub fn transmission(&self, j: usize, k: usize) -> (f32, f32) {
        let i = j * self.n_modes + k;
        (self.t_re[i], self.t_im[i])
    }

    /// Noiseless intensities `|T a|^2` for a batch of input phase vectors.
    pub fn intensities(&self, phases: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let m = self.n_modes;
        if let Some(p) = phases.iter().find(|p| p.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: p.len(),
            });
        }
        let d = self.dim();
        let mut out = Vec::with_capacity(phases.len());
        for group in phases.chunks(LANES) {
            // fields laid out mode-major so each mode's LANES values are contiguous
            let mut a_re = vec![0f32; m * LANES];
            let mut a_im = vec![0f32; m * LANES];
            for (b, ph) in group.iter().enumerate() {
                for (k, &theta) in ph.iter().enumerate() {
                    let (s, c) = theta.sin_cos();
                    a_re[k * LANES + b] = c as f32;
                    a_im[k * LANES + b] = s as f32;
                }
            }
            let mut tile = vec![0f32; d * LANES];
            tile.par_chunks_mut(PIXEL_CHUNK * LANES)
                .enumerate()
                .for_each(|(c, out)| {
                    let j0 = c * PIXEL_CHUNK;
                    let rows = out.len() / LANES;
                    let t_re = &self.t_re[j0 * m..(j0 + rows) * m];
                    let t_im = &self.t_im[j0 * m..(j0 + rows) * m];
                    kernel::intensity_tile(t_re, t_im, m, &a_re, &a_im, out);
                });
            for b in 0..group.len() {
                out.push((0..d).map(|j| f64::from(tile[j * LANES + b])).collect());
            }
        }
        Ok(out)
    }
}

mod kernel {
    use super::LANES;

    /// For every pixel row `j` of `t_*` and lane `b`, writes
    /// `|sum_k T_jk a_kb|^2` to `out[j * LANES + b]`.
    ///
    /// Each lane accumulates over `k` in ascending order with separate
    /// multiplies and adds, so a frame's values do not depend on which
    /// other frames share the batch or on the instruction set used.
    #[inline(always)]
    fn tile_impl(t_re: &[f32], t_im: &[f32], m: usize, a_re: &[f32], a_im: &[f32], out: &mut [f32]) {
        for ((tr_row, ti_row), o) in t_re
            .chunks_exact(m)
            .zip(t_im.chunks_exact(m))
            .zip(out.chunks_exact_mut(LANES))
        {
            let mut acc_re = [0f32; LANES];
            let mut acc_im = [0f32; LANES];
            for (k, (&tr, &ti)) in tr_row.iter().zip(ti_row).enumerate() {
                let ar: &[f32; LANES] = a_re[k * LANES..(k + 1) * LANES].try_into().unwrap();
                let ai: &[f32; LANES] = a_im[k * LANES..(k + 1) * LANES].try_into().unwrap();
                for b in 0..LANES {
                    acc_re[b] += tr * ar[b] - ti * ai[b];
                    acc_im[b] += tr * ai[b] + ti * ar[b];
                }
            }
            for b in 0..LANES {
                o[b] = acc_re[b] * acc_re[b] + acc_im[b] * acc_im[b];
            }
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    fn tile_avx512(t_re: &[f32], t_im: &[f32], m: usize, a_re: &[f32], a_im: &[f32], out: &mut [f32]) {
        tile_impl(t_re, t_im, m, a_re, a_im, out)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx")]
    fn tile_avx(t_re: &[f32], t_im: &[f32], m: usize, a_re: &[f32], a_im: &[f32], out: &mut [f32]) {
        tile_impl(t_re, t_im, m, a_re, a_im, out)
    }

    pub(super) fn intensity_tile(
        t_re: &[f32],
        t_im: &[f32],
        m: usize,
        a_re: &[f32],
        a_im: &[f32],
        out: &mut [f32],
    ) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx512f") {
                // SAFETY: feature checked at runtime.
                return unsafe { tile_avx512(t_re, t_im, m, a_re, a_im, out) };
            }
            if std::arch::is_x86_feature_detected!("avx") {
                // SAFETY: feature checked at runtime.
                return unsafe { tile_avx(t_re, t_im, m, a_re, a_im, out) };
            }
        }
        tile_impl(t_re, t_im, m, a_re, a_im, out)
    }

    #[cfg(test)]
    pub(super) fn tile_portable(
        t_re: &[f32],
        t_im: &[f32],
        m: usize,
        a_re: &[f32],
        a_im: &[f32],
        out: &mut [f32],
    ) {
        tile_impl(t_re, t_im, m, a_re, a_im, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusSpec {
    /// Contact location along the sensing strip, in `[0, 1]`.
    pub position: f64,
    /// Indentation amplitude in radians of peak phase; 0 means no contact.
    pub depth: f64,
    pub kernel_width: f64,
    pub texture_seed: Option<u64>,
    pub texture_gain: f64,
}

impl StimulusSpec {
    pub fn none() -> Self {
        Self {
            position: 0.5,
            depth: 0.0,
            kernel_width: 0.05,
            texture_seed: None,
            texture_gain: 0.0,
        }
    }

    pub fn touch(position: f64, depth: f64, kernel_width: f64) -> Self {
        Self {
            position,
            depth,
            kernel_width,
            texture_seed: None,
            texture_gain: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.position) {
            return Err(Error::Invalid(format!("position {} outside [0, 1]", self.position)));
        }
        if !(self.depth >= 0.0 && self.depth.is_finite()) {
            return Err(Error::Invalid(format!("depth {} must be finite and >= 0", self.depth)));
        }
        if !(self.kernel_width > 0.0 && self.kernel_width.is_finite()) {
            return Err(Error::Invalid(format!(
                "kernel width {} must be finite and > 0",
                self.kernel_width
            )));
        }
        if !(self.texture_gain >= 0.0 && self.texture_gain.is_finite()) {
            return Err(Error::Invalid(format!(
                "texture gain {} must be finite and >= 0",
                self.texture_gain
            )));
        }
        Ok(())
    }
}

/// Fixed standard-normal phase signature of a texture.
pub fn texture_signature(texture_seed: u64, n_modes: usize) -> Vec<f64> {
    let mut rng = keyed_rng(texture_seed, domain::TEXTURE, 0);
    (0..n_modes).map(|_| rng.sample(StandardNormal)).collect()
}

/// Phase imprinted on each input mode by a stimulus:
/// `depth * exp(-(k/M - position)^2 / (2 w^2)) + texture_gain * xi_k`.
pub fn phase_perturbation(n_modes: usize, stimulus: &StimulusSpec) -> Result<Vec<f64>> {
    stimulus.validate()?;
    let m = n_modes as f64;
    let w2 = 2.0 * stimulus.kernel_width * stimulus.kernel_width;
    let mut delta: Vec<f64> = (0..n_modes)
        .map(|k| {
            if stimulus.depth == 0.0 {
                return 0.0;
            }
            let x = k as f64 / m - stimulus.position;
            stimulus.depth * (-x * x / w2).exp()
        })
        .collect();
    if stimulus.texture_gain > 0.0 {
        if let Some(seed) = stimulus.texture_seed {
            for (d, xi) in delta.iter_mut().zip(texture_signature(seed, n_modes)) {
                *d += stimulus.texture_gain * xi;
            }
        }
    }
    Ok(delta)
}

/// Slowly accumulating environmental phase: a per-mode Gaussian random walk.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftState {
    phase_offset: Vec<f64>,
    drift_rate: f64,
    step_count: u64,
    drift_seed: u64,
}

impl DriftState {
    pub fn new(n_modes: usize, drift_rate: f64, drift_seed: u64) -> Result<Self> {
        if !(drift_rate >= 0.0 && drift_rate.is_finite()) {
            return Err(Error::Invalid(format!("drift rate {drift_rate} must be finite and >= 0")));
        }
        Ok(Self {
            phase_offset: vec![0.0; n_modes],
            drift_rate,
            step_count: 0,
            drift_seed,
        })
    }

    pub fn phase_offset(&self) -> &[f64] {
        &self.phase_offset
    }

    pub fn drift_rate(&self) -> f64 {
        self.drift_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn drift_seed(&self) -> u64 {
        self.drift_seed
    }

    /// Applies `k` further random-walk steps. Step `s` draws its increments
    /// from stream `s`, so `advance(a).advance(b) == advance(a + b)`.
    pub fn advance(&self, k: u64) -> Self {
        let mut next = self.clone();
        for s in self.step_count..self.step_count + k {
            let mut rng = keyed_rng(self.drift_seed, domain::DRIFT, s);
            for off in next.phase_offset.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *off += self.drift_rate * z;
            }
        }
        next.step_count += k;
        next
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    /// Standard deviation of additive Gaussian read noise, as a fraction of
    /// the frame's mean intensity.
    pub read_noise_sigma: f64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.read_noise_sigma >= 0.0 && self.read_noise_sigma.is_finite()) {
            return Err(Error::Invalid(format!(
                "read noise sigma {} must be finite and >= 0",
                self.read_noise_sigma
            )));
        }
        Ok(())
    }
}

/// One frame to render: stimulus, environment and read-noise seed.
#[derive(Debug, Clone, Copy)]
pub struct RenderRequest<'a> {
    pub stimulus: &'a StimulusSpec,
    pub drift: &'a DriftState,
    pub frame_seed: u64,
}

fn input_phases(model: &ScatterModel, req: &RenderRequest<'_>) -> Result<Vec<f64>> {
    let m = model.n_modes();
    if req.drift.phase_offset.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: req.drift.phase_offset.len(),
        });
    }
    let delta = phase_perturbation(m, req.stimulus)?;
    Ok(model
        .base_phase
        .iter()
        .zip(&req.drift.phase_offset)
        .zip(delta)
        .map(|((b, o), d)| b + o + d)
        .collect())
}

/// Adds read noise relative to the mean intensity and clips at zero.
pub fn apply_read_noise(intensity: &mut [f64], noise: &NoiseSpec, frame_seed: u64) {
    if noise.read_noise_sigma == 0.0 {
        return;
    }
    let mean = intensity.iter().sum::<f64>() / intensity.len() as f64;
    let sd = noise.read_noise_sigma * mean;
    let mut rng = keyed_rng(frame_seed, domain::READ_NOISE, 0);
    for v in intensity.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = (*v + sd * z).max(0.0);
    }
}

/// Scales so the 99.9th percentile (nearest rank) maps to 65535, rounds and
/// saturates.
pub fn quantize(intensity: &[f64]) -> Vec<u16> {
    let n = intensity.len();
    let mut sorted = intensity.to_vec();
    let rank = ((SCALE_QUANTILE * n as f64).ceil() as usize).clamp(1, n) - 1;
    let (_, &mut q, _) = sorted.select_nth_unstable_by(rank, f64::total_cmp);
    if q <= 0.0 {
        return vec![0; n];
    }
    let scale = f64::from(u16::MAX) / q;
    intensity
        .iter()
        .map(|&v| (v * scale).round().clamp(0.0, f64::from(u16::MAX)) as u16)
        .collect()
}

/// Pre-quantization intensities (noise applied, clipped at zero).
pub fn render_intensities(
    model: &ScatterModel,
    requests: &[RenderRequest<'_>],
    noise: &NoiseSpec,
) -> Result<Vec<Vec<f64>>> {
    noise.validate()?;
    let phases = requests
        .iter()
        .map(|r| input_phases(model, r))
        .collect::<Result<Vec<_>>>()?;
    let mut frames = model.intensities(&phases)?;
    frames
        .par_iter_mut()
        .zip(requests.par_iter())
        .for_each(|(f, r)| apply_read_noise(f, noise, r.frame_seed));
    Ok(frames)
}

pub fn render_batch(
    model: &ScatterModel,
    requests: &[RenderRequest<'_>],
    noise: &NoiseSpec,
) -> Result<Vec<SpeckleFrame>> {
    render_intensities(model, requests, noise)?
        .into_par_iter()
        .map(|v| SpeckleFrame::new(model.height, model.width, quantize(&v)))
        .collect()
}

/// A single 16-bit frame; identical to the same request inside any batch.
pub fn render_frame(
    model: &ScatterModel,
    stimulus: &StimulusSpec,
    drift: &DriftState,
    noise: &NoiseSpec,
    frame_seed: u64,
) -> Result<SpeckleFrame> {
    let req = RenderRequest {
        stimulus,
        drift,
        frame_seed,
    };
    Ok(render_batch(model, &[req], noise)?.pop().expect("one frame"))
}
