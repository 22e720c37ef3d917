use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::path::{Path, PathBuf};

use super::io::{write_stack, FrameFormat};
use super::process::{roi_profile, ProcessedSeries, RoiSpec};
use super::{Frame, FrameMetadata, FrameStack};
use crate::error::{Error, Result};
use crate::montecarlo::stream_rng;
use crate::source::{Realization, SourceModel};

/// Half the fourth zero of `J0`. With this amplitude the second harmonic of
/// the phase distribution vanishes, and with the reference column on a
/// fringe quadrature point the odd harmonics cancel in the symmetric
/// third-order products, so harmonic modulation reproduces the uniform-phase
/// `g3` profile.
pub const CALIBRATED_HARMONIC_AMPLITUDE: f64 = 11.791_534_439_014_281 / 2.0;

/// How the relative source phase varies from frame to frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseModulation {
    Uniform,
    /// `θ_j = amplitude · sin(2π · frequency_hz · j / frame_rate_hz)`.
    Harmonic {
        amplitude: f64,
        frequency_hz: f64,
        frame_rate_hz: f64,
    },
    /// The same phase in every frame.
    Fixed { theta: f64 },
}

impl PhaseModulation {
    /// 50 Hz drive sampled at a frame rate incommensurate with it (golden
    /// ratio), so the drive phase is equidistributed over the stack.
    pub fn harmonic(amplitude: f64) -> Self {
        PhaseModulation::Harmonic {
            amplitude,
            frequency_hz: 50.0,
            frame_rate_hz: 50.0 * (1.0 + 5f64.sqrt()) / 2.0,
        }
    }

    pub fn calibrated_harmonic() -> Self {
        Self::harmonic(CALIBRATED_HARMONIC_AMPLITUDE)
    }

    fn theta(&self, frame: usize, drawn: f64) -> f64 {
        match *self {
            PhaseModulation::Uniform => drawn,
            PhaseModulation::Harmonic {
                amplitude,
                frequency_hz,
                frame_rate_hz,
            } => (amplitude * (TAU * frequency_hz * frame as f64 / frame_rate_hz).sin()).rem_euclid(TAU),
            PhaseModulation::Fixed { theta } => theta.rem_euclid(TAU),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Additive read noise, in counts.
    pub gaussian_sigma: f64,
    /// Photon shot noise on the ideal pixel value.
    pub poisson: bool,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            gaussian_sigma: 0.0,
            poisson: false,
        }
    }

    pub fn is_none(&self) -> bool {
        self.gaussian_sigma == 0.0 && !self.poisson
    }
}

/// Camera and fringe geometry for synthetic stacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optics {
    pub width: usize,
    pub height: usize,
    pub fringe_period_px: f64,
    /// Fringe phase at the center column `width / 2`.
    pub fringe_phase_rad: f64,
    /// FWHM of the Gaussian intensity envelope centered on the frame.
    pub envelope_fwhm_px: Option<f64>,
    /// Pixel value at a bright fringe of a mean-intensity coherent pulse.
    pub peak_level: f64,
    pub noise: NoiseSpec,
    pub bit_depth: Option<u32>,
    pub phase_modulation: PhaseModulation,
    /// Zero the second source, leaving a single unmodulated beam.
    pub block_source_b: bool,
}

impl Default for Optics {
    fn default() -> Self {
        let peak_level = 8000.0;
        Optics {
            width: 640,
            height: 64,
            fringe_period_px: 60.0,
            fringe_phase_rad: 0.0,
            envelope_fwhm_px: Some(1200.0),
            peak_level,
            noise: NoiseSpec {
                gaussian_sigma: 0.01 * peak_level,
                poisson: true,
            },
            bit_depth: Some(16),
            phase_modulation: PhaseModulation::Uniform,
            block_source_b: false,
        }
    }
}

impl Optics {
    /// Default geometry with real-valued pixels: no noise, no quantization.
    pub fn noiseless() -> Self {
        Optics {
            noise: NoiseSpec::none(),
            bit_depth: None,
            ..Optics::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadOptics(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("frame size {}x{}", self.width, self.height));
        }
        if !(self.fringe_period_px >= 4.0) {
            return bad(format!("fringe period {} px is below 4 px", self.fringe_period_px));
        }
        if !(self.peak_level > 0.0) {
            return bad(format!("peak level {}", self.peak_level));
        }
        if let Some(f) = self.envelope_fwhm_px {
            if !(f > 0.0) {
                return bad(format!("envelope FWHM {f} px"));
            }
        }
        if !(self.noise.gaussian_sigma >= 0.0) {
            return bad(format!("read noise sigma {}", self.noise.gaussian_sigma));
        }
        if let Some(b) = self.bit_depth {
            if !(1..=16).contains(&b) {
                return bad(format!("bit depth {b}"));
            }
        }
        Ok(())
    }

    /// Reference column of a centered ROI of `roi_width` pixels.
    pub fn centered_roi(&self, roi_width: usize, roi_height: usize) -> RoiSpec {
        let x0 = (self.width / 2).saturating_sub(roi_width / 2);
        let y0 = (self.height.saturating_sub(roi_height)) / 2;
        RoiSpec {
            x0,
            y0,
            width: roi_width,
            height: roi_height,
            reference_column: self.width / 2 - x0,
        }
    }

    fn metadata(&self, model: &SourceModel) -> FrameMetadata {
        FrameMetadata {
            source_kind: Some(model.kind),
            envelope_fwhm_px: self.envelope_fwhm_px,
            coherence_width: model.coherence_width,
            noise: Some(self.noise),
            bit_depth: self.bit_depth,
            phase_modulation: Some(self.phase_modulation),
        }
    }
}

fn realization_for(model: &SourceModel, optics: &Optics, index: usize, rng: &mut impl Rng) -> Result<Realization> {
    let mut r = model.sample(rng)?;
    r.theta = optics.phase_modulation.theta(index, r.theta);
    if optics.block_source_b {
        r.intensity_b = 0.0;
    }
    Ok(r)
}

/// Noise-free pixel values of one row; every row of a frame shares them.
fn ideal_row(model: &SourceModel, optics: &Optics, r: &Realization) -> Vec<f64> {
    let center = (optics.width / 2) as f64;
    let scale = optics.peak_level / (4.0 * model.mean_intensity);
    let k = TAU / optics.fringe_period_px;
    let sigma_env = optics
        .envelope_fwhm_px
        .map(|f| f / (2.0 * (2.0 * 2f64.ln()).sqrt()));
    (0..optics.width)
        .map(|x| {
            let dx = x as f64 - center;
            let env = sigma_env.map_or(1.0, |s| (-dx * dx / (2.0 * s * s)).exp());
            let delta = k * dx;
            let gamma = model.coherence_factor(delta);
            env * r.intensity_at(delta + optics.fringe_phase_rad, gamma).max(0.0) * scale
        })
        .collect()
}

/// Frame `index` of the stack generated from `seed`.
pub fn synth_frame(model: &SourceModel, optics: &Optics, seed: u64, index: usize) -> Result<Frame> {
    let mut rng = stream_rng(seed, index as u64);
    let r = realization_for(model, optics, index, &mut rng)?;
    let row = ideal_row(model, optics, &r);
    let max_count = optics.bit_depth.map(|b| f64::from((1u32 << b) - 1));
    let read = (optics.noise.gaussian_sigma > 0.0)
        .then(|| Normal::new(0.0, optics.noise.gaussian_sigma).expect("sigma checked"));
    let mut data = Vec::with_capacity(optics.width * optics.height);
    for _ in 0..optics.height {
        for &ideal in &row {
            let mut v = ideal;
            if optics.noise.poisson && v > 0.0 {
                v = Poisson::new(v).expect("positive rate").sample(&mut rng);
            }
            if let Some(n) = &read {
                v += n.sample(&mut rng);
            }
            v = v.max(0.0);
            if let Some(max) = max_count {
                v = v.round().min(max);
            }
            data.push(v);
        }
    }
    Frame::new(optics.width, optics.height, data)
}

fn check(model: &SourceModel, optics: &Optics, n: usize) -> Result<()> {
    model.validate()?;
    optics.validate()?;
    if n == 0 {
        return Err(Error::BadOptics("at least one frame is required".into()));
    }
    Ok(())
}

/// `n` frames, each from its own stream of `seed`.
pub fn synth_frames(model: &SourceModel, optics: &Optics, n: usize, seed: u64) -> Result<FrameStack> {
    check(model, optics, n)?;
    let frames = (0..n)
        .into_par_iter()
        .map(|j| synth_frame(model, optics, seed, j))
        .collect::<Result<Vec<_>>>()?;
    FrameStack::new(frames, Some(optics.fringe_period_px), optics.metadata(model))
}

/// `roi_average(synth_frames(..))` without holding the whole stack in memory.
pub fn synth_series(model: &SourceModel, optics: &Optics, n: usize, seed: u64, roi: &RoiSpec) -> Result<ProcessedSeries> {
    check(model, optics, n)?;
    roi.check_bounds(optics.width, optics.height)?;
    let profiles = (0..n)
        .into_par_iter()
        .map(|j| synth_frame(model, optics, seed, j).map(|f| roi_profile(&f, roi)))
        .collect::<Result<Vec<_>>>()?;
    ProcessedSeries::new(profiles, roi.reference_column, Some(optics.fringe_period_px))
}

/// Frames generated per parallel chunk by [`synth_to_dir`].
const WRITE_CHUNK: usize = 64;

/// Writes the stack of [`synth_frames`] to `dir` without holding it in
/// memory; returns the manifest path.
pub fn synth_to_dir(
    model: &SourceModel,
    optics: &Optics,
    n: usize,
    seed: u64,
    dir: &Path,
    format: FrameFormat,
) -> Result<PathBuf> {
    check(model, optics, n)?;
    let chunks = (0..n).step_by(WRITE_CHUNK).flat_map(|start| {
        let end = (start + WRITE_CHUNK).min(n);
        let frames: Vec<Result<Frame>> = (start..end)
            .into_par_iter()
            .map(|j| synth_frame(model, optics, seed, j))
            .collect();
        frames
    });
    write_stack(chunks, n, dir, format, Some(optics.fringe_period_px), optics.metadata(model))
}
