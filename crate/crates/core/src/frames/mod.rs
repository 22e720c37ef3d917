//! Single-pulse interference frames and the frame-stack ICF estimators.
//!
//! A stack holds `n` camera frames of the far-field two-source pattern.
//! Each frame is cut to a rectangular ROI and averaged over its rows,
//! giving one intensity profile `I_j(x)` per frame; correlation profiles are
//! then formed from products at symmetric pixel offsets around a reference
//! column.

mod io;
mod process;
mod synth;

pub use io::{
    load_frame, load_frames, load_series, load_stack, read_manifest, save_frame, save_stack, write_stack,
    FrameFormat, StackManifest,
};
pub use process::{
    fit_fringe_period, fringe_visibility, g3_profile, g4_profile, mean_profile, roi_average,
    CorrelationProfile, ProcessedSeries, ProfileOptions, RoiSpec,
};
pub use synth::{
    synth_frame, synth_frames, synth_series, synth_to_dir, NoiseSpec, Optics, PhaseModulation,
    CALIBRATED_HARMONIC_AMPLITUDE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::SourceKind;

/// One frame, row-major, `height` rows of `width` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InconsistentDimensions {
                expected: (width, height),
                got: (data.len(), 1),
            });
        }
        Ok(Frame { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Frame {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Provenance recorded alongside a stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FrameMetadata {
    #[serde(default)]
    pub source_kind: Option<SourceKind>,
    #[serde(default)]
    pub envelope_fwhm_px: Option<f64>,
    #[serde(default)]
    pub coherence_width: Option<f64>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub bit_depth: Option<u32>,
    #[serde(default)]
    pub phase_modulation: Option<PhaseModulation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub frames: Vec<Frame>,
    pub fringe_period_px: Option<f64>,
    pub metadata: FrameMetadata,
}

impl FrameStack {
    /// Checks that the stack is nonempty with equal frame sizes and
    /// nonnegative values that respect the bit depth.
    pub fn new(frames: Vec<Frame>, fringe_period_px: Option<f64>, metadata: FrameMetadata) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::BadOptics("a frame stack needs at least one frame".into()));
        };
        let dims = first.dims();
        for f in &frames {
            if f.dims() != dims {
                return Err(Error::InconsistentDimensions {
                    expected: dims,
                    got: f.dims(),
                });
            }
        }
        if let Some(p) = fringe_period_px {
            if !(p > 0.0) {
                return Err(Error::BadOptics(format!("fringe period {p} px")));
            }
        }
        Ok(FrameStack {
            frames,
            fringe_period_px,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn is_integer_valued(&self) -> bool {
        self.frames
            .iter()
            .all(|f| f.data.iter().all(|v| v.fract() == 0.0))
    }
}
