use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{Frame, FrameStack};
use crate::error::{Error, Result};
use crate::montecarlo::standard_error;
use crate::pattern::InterferencePattern;

/// Rectangle processed in every frame. `reference_column` is the `x = 0`
/// column, relative to `x0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiSpec {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    pub reference_column: usize,
}

impl Default for RoiSpec {
    /// 600 x 50 pixels, reference at the center column, placed for the
    /// default 640 x 64 synthetic frame.
    fn default() -> Self {
        RoiSpec {
            x0: 20,
            y0: 7,
            width: 600,
            height: 50,
            reference_column: 300,
        }
    }
}

impl RoiSpec {
    pub fn check_bounds(&self, frame_width: usize, frame_height: usize) -> Result<()> {
        if self.width == 0
            || self.height == 0
            || self.x0 + self.width > frame_width
            || self.y0 + self.height > frame_height
        {
            return Err(Error::RoiOutOfBounds {
                roi: (self.x0, self.y0, self.width, self.height),
                width: frame_width,
                height: frame_height,
            });
        }
        if self.reference_column >= self.width {
            return Err(Error::ReferenceOutOfRange {
                reference: self.reference_column,
                width: self.width,
            });
        }
        Ok(())
    }
}

/// Per-frame row-averaged profiles `I_j(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedSeries {
    pub profiles: Vec<Vec<f64>>,
    pub reference_column: usize,
    /// Known fringe period; when absent it is fitted from the first frame.
    pub fringe_period_px: Option<f64>,
}

impl ProcessedSeries {
    pub fn new(profiles: Vec<Vec<f64>>, reference_column: usize, fringe_period_px: Option<f64>) -> Result<Self> {
        let width = profiles.first().map(Vec::len).unwrap_or(0);
        if profiles.is_empty() || width == 0 {
            return Err(Error::BadOptics("a processed series needs at least one nonempty profile".into()));
        }
        if let Some(p) = profiles.iter().find(|p| p.len() != width) {
            return Err(Error::InconsistentDimensions {
                expected: (width, 1),
                got: (p.len(), 1),
            });
        }
        if reference_column >= width {
            return Err(Error::ReferenceOutOfRange {
                reference: reference_column,
                width,
            });
        }
        Ok(ProcessedSeries {
            profiles,
            reference_column,
            fringe_period_px,
        })
    }

    pub fn width(&self) -> usize {
        self.profiles[0].len()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Supplied period, or the dominant spatial period of the first profile.
    pub fn period_px(&self) -> f64 {
        self.fringe_period_px
            .unwrap_or_else(|| fit_fringe_period(&self.profiles[0]))
    }

    /// Radians per pixel of offset.
    pub fn phase_scale(&self) -> f64 {
        TAU / self.period_px()
    }
}

pub(crate) fn roi_profile(frame: &Frame, roi: &RoiSpec) -> Vec<f64> {
    let mut profile = vec![0.0; roi.width];
    for y in roi.y0..roi.y0 + roi.height {
        let row = &frame.row(y)[roi.x0..roi.x0 + roi.width];
        for (p, v) in profile.iter_mut().zip(row) {
            *p += v;
        }
    }
    let h = roi.height as f64;
    profile.iter_mut().for_each(|p| *p /= h);
    profile
}

/// Averages each frame's ROI over its rows.
pub fn roi_average(stack: &FrameStack, roi: &RoiSpec) -> Result<ProcessedSeries> {
    let (w, h) = stack.dims();
    roi.check_bounds(w, h)?;
    let profiles = stack.frames.iter().map(|f| roi_profile(f, roi)).collect();
    ProcessedSeries::new(profiles, roi.reference_column, stack.fringe_period_px)
}

/// Frame-averaged intensity `I(x) = (1/n) Σ_j I_j(x)`.
pub fn mean_profile(series: &ProcessedSeries) -> Vec<f64> {
    let n = series.len() as f64;
    let mut mean = vec![0.0; series.width()];
    for p in &series.profiles {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    /// Contiguous frame batches used for the standard errors.
    pub n_batches: usize,
    /// Also evaluate negative offsets.
    pub signed: bool,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            n_batches: 20,
            signed: false,
        }
    }
}

/// A correlation profile in both pixel and phase coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationProfile {
    pub offsets_px: Vec<i64>,
    pub pattern: InterferencePattern,
}

/// `g3(x) = <I_j(x) I_j(0) I_j(-x)> / (I(x) I(0) I(-x))`.
pub fn g3_profile(series: &ProcessedSeries, opts: &ProfileOptions) -> Result<CorrelationProfile> {
    let r = series.reference_column;
    let w = series.width();
    let reach = r.min(w - 1 - r);
    if reach == 0 {
        return Err(Error::ReferenceOutOfRange { reference: r, width: w });
    }
    correlation_profile(series, opts, reach, &[1, 0, -1])
}

/// `g4(x) = <I_j(x) I_j(0) I_j(-x) I_j(-2x)> / (I(x) I(0) I(-x) I(-2x))`.
pub fn g4_profile(series: &ProcessedSeries, opts: &ProfileOptions) -> Result<CorrelationProfile> {
    let r = series.reference_column;
    let w = series.width();
    // -2x must stay inside the ROI for offsets up to a quarter width
    if 4 * r < w || 4 * r > 3 * w {
        return Err(Error::ReferenceOutOfRange { reference: r, width: w });
    }
    let reach = (r / 2).min(w - 1 - r);
    if reach == 0 {
        return Err(Error::ReferenceOutOfRange { reference: r, width: w });
    }
    correlation_profile(series, opts, reach, &[1, 0, -1, -2])
}

fn correlation_profile(
    series: &ProcessedSeries,
    opts: &ProfileOptions,
    reach: usize,
    multipliers: &[i64],
) -> Result<CorrelationProfile> {
    let reach = reach as i64;
    let offsets: Vec<i64> = if opts.signed {
        (-reach..=reach).filter(|&x| x != 0).collect()
    } else {
        (1..=reach).collect()
    };
    let mean = mean_profile(series);
    let peak = mean.iter().cloned().fold(0.0, f64::max);
    let r = series.reference_column as i64;
    let n = series.len();
    let batches = opts.n_batches.clamp(1, n);
    let bounds: Vec<usize> = (0..=batches).map(|b| b * n / batches).collect();

    let mut values = Vec::with_capacity(offsets.len());
    let mut errors = Vec::with_capacity(offsets.len());
    for &x in &offsets {
        // for negative offsets the argument set is mirrored; at most one column repeats
        let cols: Vec<usize> = multipliers.iter().map(|m| (r + m * x) as usize).collect();
        let mut denom = 1.0;
        for &c in &cols {
            if !(mean[c] > 1e-12 * peak) {
                return Err(Error::DivisionByZeroMean(c as i64 - r));
            }
            denom *= mean[c];
        }
        let products: Vec<f64> = series
            .profiles
            .iter()
            .map(|p| cols.iter().map(|&c| p[c]).product())
            .collect();
        let value = products.iter().sum::<f64>() / n as f64 / denom;
        let ratios: Vec<f64> = bounds
            .windows(2)
            .map(|b| {
                let frames = &series.profiles[b[0]..b[1]];
                let m = (b[1] - b[0]) as f64;
                let num = products[b[0]..b[1]].iter().sum::<f64>() / m;
                let den: f64 = cols
                    .iter()
                    .map(|&c| frames.iter().map(|p| p[c]).sum::<f64>() / m)
                    .product();
                num / den
            })
            .collect();
        values.push(value);
        errors.push(standard_error(&ratios));
    }
    let scale = series.phase_scale();
    let xs = offsets.iter().map(|&x| x as f64 * scale).collect();
    Ok(CorrelationProfile {
        offsets_px: offsets,
        pattern: InterferencePattern::new(xs, values, Some(errors))?,
    })
}

/// Fringe visibility of a profile from its Fourier component at the fringe
/// frequency, `2 |c1| / c0`, over the largest whole number of periods.
/// Slow envelopes barely leak into this component.
pub fn fringe_visibility(profile: &[f64], period_px: f64) -> f64 {
    let periods = (profile.len() as f64 / period_px).floor().max(1.0);
    let len = ((periods * period_px).round() as usize).clamp(1, profile.len());
    let samples = &profile[..len];
    let k = TAU / period_px;
    let (mut re, mut im, mut dc) = (0.0, 0.0, 0.0);
    for (x, &v) in samples.iter().enumerate() {
        let (s, c) = (k * x as f64).sin_cos();
        re += v * c;
        im -= v * s;
        dc += v;
    }
    if dc == 0.0 {
        return 0.0;
    }
    2.0 * (re * re + im * im).sqrt() / dc
}

fn spectral_power(centered: &[f64], freq: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (x, &v) in centered.iter().enumerate() {
        let (s, c) = (TAU * freq * x as f64).sin_cos();
        re += v * c;
        im -= v * s;
    }
    re * re + im * im
}

/// Period (pixels) of the strongest spatial frequency in `profile`,
/// between 4 pixels and half the profile length.
pub fn fit_fringe_period(profile: &[f64]) -> f64 {
    let n = profile.len();
    let mean = profile.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = profile.iter().map(|v| v - mean).collect();
    let nf = n as f64;
    let bins = (2..=n / 4).collect::<Vec<_>>();
    if bins.is_empty() {
        return nf;
    }
    let best = bins
        .iter()
        .copied()
        .max_by(|&a, &b| {
            spectral_power(&centered, a as f64 / nf).total_cmp(&spectral_power(&centered, b as f64 / nf))
        })
        .unwrap();
    // golden-section refinement between the neighbouring bins
    let (mut lo, mut hi) = ((best as f64 - 1.0) / nf, (best as f64 + 1.0) / nf);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut pa, mut pb) = (spectral_power(&centered, a), spectral_power(&centered, b));
    for _ in 0..80 {
        if pa > pb {
            hi = b;
            b = a;
            pb = pa;
            a = hi - phi * (hi - lo);
            pa = spectral_power(&centered, a);
        } else {
            lo = a;
            a = b;
            pa = pb;
            b = lo + phi * (hi - lo);
            pb = spectral_power(&centered, b);
        }
    }
    2.0 / (lo + hi)
}
