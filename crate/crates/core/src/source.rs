//! Statistical models of a single classical source.
//!
//! Both sources of the two-source interferometer share one [`SourceModel`]:
//! the same intensity statistics, the same mean intensity, and independently
//! fluctuating phases. A model is described by its normalized intensity
//! moments `g(k) = <I^k> / <I>^k`; coherent light has `g(k) = 1`, single-mode
//! thermal light (exponential intensity) has `g(k) = k!`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Coherent,
    Thermal,
    Custom,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Coherent => "coherent",
            SourceKind::Thermal => "thermal",
            SourceKind::Custom => "custom",
        }
    }
}

impl std::fmt::Display for SourceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "coherent" => Ok(SourceKind::Coherent),
            "thermal" => Ok(SourceKind::Thermal),
            "custom" => Ok(SourceKind::Custom),
            other => Err(format!("unknown source kind '{other}'")),
        }
    }
}

/// Statistical description of one classical source.
///
/// Deserializes from `{"kind": "thermal", "mean_intensity": 1.0,
/// "moments": {...}, "coherence_width": null}`; for coherent and thermal
/// kinds the moment table is always refilled from the kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawSourceModel")]
pub struct SourceModel {
    pub kind: SourceKind,
    pub mean_intensity: f64,
    pub moments: BTreeMap<u32, f64>,
    /// Width (radians of detector phase) of the Gaussian mutual-coherence
    /// envelope. `None` means infinite coherence.
    pub coherence_width: Option<f64>,
}

#[derive(Deserialize)]
struct RawSourceModel {
    kind: SourceKind,
    #[serde(default = "default_mean")]
    mean_intensity: f64,
    #[serde(default)]
    moments: BTreeMap<u32, f64>,
    #[serde(default)]
    coherence_width: Option<f64>,
}

fn default_mean() -> f64 {
    1.0
}

impl From<RawSourceModel> for SourceModel {
    fn from(raw: RawSourceModel) -> Self {
        let moments = match raw.kind {
            SourceKind::Custom => raw.moments,
            kind => standard_moments(kind),
        };
        SourceModel {
            kind: raw.kind,
            mean_intensity: raw.mean_intensity,
            moments,
            coherence_width: raw.coherence_width,
        }
    }
}

fn standard_moments(kind: SourceKind) -> BTreeMap<u32, f64> {
    (2..=4)
        .map(|k| {
            let g = match kind {
                SourceKind::Thermal => factorial(k),
                _ => 1.0,
            };
            (k, g)
        })
        .collect()
}

pub(crate) fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// One instantaneous draw of the two sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Realization {
    pub intensity_a: f64,
    pub intensity_b: f64,
    /// Relative phase of the two sources, in `[0, 2π)`.
    pub theta: f64,
}

impl Realization {
    /// Intensity at a detector whose path phase difference is `delta`,
    /// with the interference term attenuated by `coherence`.
    #[inline]
    pub fn intensity_at(&self, delta: f64, coherence: f64) -> f64 {
        let cross = 2.0 * (self.intensity_a * self.intensity_b).sqrt();
        self.intensity_a + self.intensity_b + coherence * cross * (self.theta + delta).cos()
    }
}

impl SourceModel {
    pub fn coherent() -> Self {
        Self::of_kind(SourceKind::Coherent)
    }

    pub fn thermal() -> Self {
        Self::of_kind(SourceKind::Thermal)
    }

    pub fn of_kind(kind: SourceKind) -> Self {
        SourceModel {
            kind,
            mean_intensity: 1.0,
            moments: standard_moments(kind),
            coherence_width: None,
        }
    }

    /// A moments-only model from `(order, g)` pairs.
    pub fn custom(moments: impl IntoIterator<Item = (u32, f64)>) -> Self {
        SourceModel {
            kind: SourceKind::Custom,
            mean_intensity: 1.0,
            moments: moments.into_iter().collect(),
            coherence_width: None,
        }
    }

    pub fn with_mean_intensity(mut self, mean: f64) -> Self {
        self.mean_intensity = mean;
        self
    }

    pub fn with_coherence_width(mut self, width: Option<f64>) -> Self {
        self.coherence_width = width;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Checks the model invariants, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_intensity > 0.0 && self.mean_intensity.is_finite()) {
            return Err(Error::NonpositiveMeanIntensity(self.mean_intensity));
        }
        if let Some(w) = self.coherence_width {
            if !(w > 0.0) {
                return Err(Error::NonpositiveWidth(w));
            }
        }
        let g2 = self.moments.get(&2).copied();
        let g3 = self.moments.get(&3).copied();
        let g4 = self.moments.get(&4).copied();
        if let Some(g2) = g2 {
            if !(g2 >= 1.0) {
                return Err(Error::MomentInequalityViolated { order: 2, lhs: g2, rhs: 1.0 });
            }
        }
        if let (Some(g2), Some(g3)) = (g2, g3) {
            if !(g3 >= g2 * g2) {
                return Err(Error::MomentInequalityViolated { order: 3, lhs: g3, rhs: g2 * g2 });
            }
        }
        if let (Some(g2), Some(g3), Some(g4)) = (g2, g3, g4) {
            if !(g4 * g2 >= g3 * g3) {
                return Err(Error::MomentInequalityViolated {
                    order: 4,
                    lhs: g4 * g2,
                    rhs: g3 * g3,
                });
            }
        }
        Ok(())
    }

    /// Normalized moment `g(k)`. Orders 0 and 1 are 1 by definition;
    /// coherent and thermal models answer any order.
    pub fn moment(&self, k: u32) -> Result<f64> {
        match (k, self.kind) {
            (0 | 1, _) => Ok(1.0),
            (_, SourceKind::Coherent) => Ok(1.0),
            (_, SourceKind::Thermal) => Ok(factorial(k)),
            (_, SourceKind::Custom) => self.moments.get(&k).copied().ok_or(Error::MissingMoment(k)),
        }
    }

    /// Attenuation of the interference term at detector phase `delta`.
    #[inline]
    pub fn coherence_factor(&self, delta: f64) -> f64 {
        match self.coherence_width {
            Some(w) => (-delta * delta / (2.0 * w * w)).exp(),
            None => 1.0,
        }
    }

    /// Draws one realization of the source pair.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Realization> {
        let (intensity_a, intensity_b) = match self.kind {
            SourceKind::Coherent => (self.mean_intensity, self.mean_intensity),
            SourceKind::Thermal => {
                let a: f64 = Exp1.sample(rng);
                let b: f64 = Exp1.sample(rng);
                (a * self.mean_intensity, b * self.mean_intensity)
            }
            SourceKind::Custom => return Err(Error::CustomModelNotSamplable),
        };
        Ok(Realization {
            intensity_a,
            intensity_b,
            theta: uniform_phase(rng),
        })
    }
}

/// Uniform draw on `[0, 2π)`.
pub(crate) fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let theta = rng.random::<f64>() * TAU;
    if theta >= TAU {
        0.0
    } else {
        theta
    }
}
