//! Closed-form normalized intensity correlation functions of two
//! phase-randomized classical sources, for two, three and four detectors.
//!
//! Each detector `j` sees `I_j = I_A + I_B + 2 sqrt(I_A I_B) cos(θ + δ_j)`
//! where `δ_j` is the path phase difference of the two sources at that
//! detector. Only the pairwise differences `φ_ij = δ_i - δ_j` enter the
//! correlation functions, so every formula here is a constant plus a short
//! sum of cosines of signed combinations of the `δ_j`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{visibility, InterferencePattern};
use crate::source::{SourceKind, SourceModel};

/// Per-detector phases `δ_j = φ_Aj - φ_Bj` for an `n`-detector measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub delta: Vec<f64>,
}

impl PhaseConfig {
    pub fn new(delta: impl Into<Vec<f64>>) -> Self {
        PhaseConfig { delta: delta.into() }
    }

    pub fn order(&self) -> usize {
        self.delta.len()
    }

    /// `φ_ij = δ_i - δ_j` (zero-based detector indices).
    pub fn phi(&self, i: usize, j: usize) -> f64 {
        self.delta[i] - self.delta[j]
    }

    fn expect_order(&self, n: usize) -> Result<()> {
        if self.order() != n {
            return Err(Error::PhaseCount {
                expected: n,
                got: self.order(),
            });
        }
        Ok(())
    }
}

/// `coeff * cos(Σ_j signs[j] δ_j)`, attenuated by the coherence factor of
/// every detector that carries a nonzero sign.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineTerm {
    pub coeff: f64,
    pub signs: Vec<i8>,
}

/// A closed-form ICF as a constant plus cosine terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    pub order: usize,
    pub constant: f64,
    pub terms: Vec<CosineTerm>,
}

fn term(coeff: f64, signs: &[i8]) -> CosineTerm {
    CosineTerm {
        coeff,
        signs: signs.to_vec(),
    }
}

impl ClosedForm {
    /// Two detectors: `(g2 + 1)/2 + cos φ12 / 2`.
    pub fn second_order(model: &SourceModel) -> Result<Self> {
        let g2 = model.moment(2)?;
        Ok(ClosedForm {
            order: 2,
            constant: (g2 + 1.0) / 2.0,
            terms: vec![term(0.5, &[1, -1])],
        })
    }

    /// Three detectors:
    /// `g3/4 + (g2/2) [3/2 + cos φ12 + cos φ23 + cos φ13]`.
    pub fn third_order(model: &SourceModel) -> Result<Self> {
        let g2 = model.moment(2)?;
        let g3 = model.moment(3)?;
        let c = g2 / 2.0;
        Ok(ClosedForm {
            order: 3,
            constant: g3 / 4.0 + c * 1.5,
            terms: vec![
                term(c, &[1, -1, 0]), // φ12
                term(c, &[0, 1, -1]), // φ23
                term(c, &[1, 0, -1]), // φ13
            ],
        })
    }

    /// Four detectors:
    /// `g4/8 + g3/2 + 3 g2²/8`
    /// `+ (g3 + g2²)/4 [cos φ12 + cos φ13 + cos φ14 + cos(φ12-φ13) + cos(φ12-φ14) + cos(φ13-φ14)]`
    /// `+ g2²/8 [cos(φ12+φ13-φ14) + cos(φ12+φ14-φ13) + cos(φ13+φ14-φ12)]`.
    pub fn fourth_order(model: &SourceModel) -> Result<Self> {
        let g2 = model.moment(2)?;
        let g3 = model.moment(3)?;
        let g4 = model.moment(4)?;
        let pair = (g3 + g2 * g2) / 4.0;
        let triple = g2 * g2 / 8.0;
        Ok(ClosedForm {
            order: 4,
            constant: g4 / 8.0 + g3 / 2.0 + 3.0 * g2 * g2 / 8.0,
            terms: vec![
                term(pair, &[1, -1, 0, 0]),      // φ12
                term(pair, &[1, 0, -1, 0]),      // φ13
                term(pair, &[1, 0, 0, -1]),      // φ14
                term(pair, &[0, -1, 1, 0]),      // φ12 - φ13
                term(pair, &[0, -1, 0, 1]),      // φ12 - φ14
                term(pair, &[0, 0, -1, 1]),      // φ13 - φ14
                term(triple, &[1, -1, -1, 1]),   // φ12 + φ13 - φ14
                term(triple, &[1, -1, 1, -1]),   // φ12 + φ14 - φ13
                term(triple, &[1, 1, -1, -1]),   // φ13 + φ14 - φ12
            ],
        })
    }

    pub fn for_order(model: &SourceModel, order: usize) -> Result<Self> {
        match order {
            2 => Self::second_order(model),
            3 => Self::third_order(model),
            4 => Self::fourth_order(model),
            n => Err(Error::UnsupportedOrder(n)),
        }
    }

    pub fn evaluate(&self, model: &SourceModel, delta: &[f64]) -> f64 {
        debug_assert_eq!(delta.len(), self.order);
        let gamma: Vec<f64> = delta.iter().map(|&d| model.coherence_factor(d)).collect();
        let mut total = self.constant;
        for t in &self.terms {
            let mut phase = 0.0;
            let mut envelope = 1.0;
            for (j, &s) in t.signs.iter().enumerate() {
                if s != 0 {
                    phase += f64::from(s) * delta[j];
                    envelope *= gamma[j];
                }
            }
            total += t.coeff * envelope * phase.cos();
        }
        total
    }

    /// Value and first two derivatives along a linear trajectory
    /// `δ_j(x) = velocity[j] x + offset[j]`.
    pub fn evaluate_along(&self, model: &SourceModel, line: &LinearScan, x: f64) -> (f64, f64, f64) {
        let inv_w2 = model.coherence_width.map_or(0.0, |w| 1.0 / (w * w));
        let mut value = self.constant;
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for t in &self.terms {
            let mut k = 0.0;
            let mut psi = 0.0;
            let mut log_env = 0.0;
            let mut log_env_d1 = 0.0;
            let mut log_env_d2 = 0.0;
            for (j, &s) in t.signs.iter().enumerate() {
                if s == 0 {
                    continue;
                }
                let (v, o) = (line.velocity[j], line.offset[j]);
                let d = v * x + o;
                k += f64::from(s) * v;
                psi += f64::from(s) * d;
                log_env -= 0.5 * d * d * inv_w2;
                log_env_d1 -= d * v * inv_w2;
                log_env_d2 -= v * v * inv_w2;
            }
            let amp = t.coeff * log_env.exp();
            let (sin, cos) = psi.sin_cos();
            value += amp * cos;
            d1 += amp * (log_env_d1 * cos - k * sin);
            d2 += amp * ((log_env_d1 * log_env_d1 + log_env_d2 - k * k) * cos - 2.0 * log_env_d1 * k * sin);
        }
        (value, d1, d2)
    }
}

/// Two-detector ICF at pairwise phase `phi12`.
pub fn g2_point(model: &SourceModel, phi12: f64) -> Result<f64> {
    Ok(ClosedForm::second_order(model)?.evaluate(model, &[phi12, 0.0]))
}

pub fn g3_point(model: &SourceModel, cfg: &PhaseConfig) -> Result<f64> {
    cfg.expect_order(3)?;
    Ok(ClosedForm::third_order(model)?.evaluate(model, &cfg.delta))
}

pub fn g4_point(model: &SourceModel, cfg: &PhaseConfig) -> Result<f64> {
    cfg.expect_order(4)?;
    Ok(ClosedForm::fourth_order(model)?.evaluate(model, &cfg.delta))
}

/// Closed-form ICF for any supported order (2, 3 or 4).
pub fn icf_point(model: &SourceModel, cfg: &PhaseConfig) -> Result<f64> {
    Ok(ClosedForm::for_order(model, cfg.order())?.evaluate(model, &cfg.delta))
}

/// How the detector phases move with the scan coordinate `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum ScanScheme {
    /// Outer detectors move in opposite directions: `δ = (x, 0, -x)`.
    /// For two detectors this is `δ = (x, 0)`.
    SymmetricOpposite,
    /// Only the first detector moves: `δ = (x, 0, -phi23)`.
    SingleDetector { phi23: f64 },
    /// `δ = (x, 0, -x, -2x)`, the fourth detector at double speed.
    FourPointDoubleSpeed,
    /// `δ_j = velocity[j] x + offset[j]`.
    Custom { velocity: Vec<f64>, offset: Vec<f64> },
}

impl ScanScheme {
    pub fn name(&self) -> &'static str {
        match self {
            ScanScheme::SymmetricOpposite => "symmetric_opposite",
            ScanScheme::SingleDetector { .. } => "single_detector",
            ScanScheme::FourPointDoubleSpeed => "four_point_double_speed",
            ScanScheme::Custom { .. } => "custom",
        }
    }

    /// The natural scheme for a given order: symmetric for 2 and 3
    /// detectors, double speed for 4.
    pub fn canonical(order: usize) -> Self {
        if order == 4 {
            ScanScheme::FourPointDoubleSpeed
        } else {
            ScanScheme::SymmetricOpposite
        }
    }

    pub fn linear(&self, order: usize) -> Result<LinearScan> {
        let unsupported = || Error::SchemeOrder {
            scheme: self.name(),
            order,
        };
        let (velocity, offset) = match (self, order) {
            (ScanScheme::SymmetricOpposite | ScanScheme::SingleDetector { .. }, 2) => {
                (vec![1.0, 0.0], vec![0.0, 0.0])
            }
            (ScanScheme::SymmetricOpposite, 3) => (vec![1.0, 0.0, -1.0], vec![0.0; 3]),
            (ScanScheme::SingleDetector { phi23 }, 3) => (vec![1.0, 0.0, 0.0], vec![0.0, 0.0, -phi23]),
            (ScanScheme::FourPointDoubleSpeed, 4) => (vec![1.0, 0.0, -1.0, -2.0], vec![0.0; 4]),
            (ScanScheme::Custom { velocity, offset }, n) => {
                if velocity.len() != n || offset.len() != n {
                    return Err(Error::BadScan(format!(
                        "custom scheme needs {n} velocities and offsets, got {} and {}",
                        velocity.len(),
                        offset.len()
                    )));
                }
                (velocity.clone(), offset.clone())
            }
            _ => return Err(unsupported()),
        };
        Ok(LinearScan { velocity, offset })
    }
}

/// Linear phase trajectory `δ_j(x) = velocity[j] x + offset[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScan {
    pub velocity: Vec<f64>,
    pub offset: Vec<f64>,
}

impl LinearScan {
    pub fn delta(&self, x: f64) -> Vec<f64> {
        self.velocity
            .iter()
            .zip(&self.offset)
            .map(|(v, o)| v * x + o)
            .collect()
    }
}

/// A scan trajectory sampled on a grid of coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPattern {
    pub order: usize,
    pub scheme: ScanScheme,
    pub grid: Vec<f64>,
}

/// Points per full period on the default dense grid. Multiples of
/// `π/360` include the extremal coordinates `π/2` and `2π/3`.
pub const DENSE_GRID_POINTS: usize = 721;

impl ScanPattern {
    pub fn new(order: usize, scheme: ScanScheme, grid: Vec<f64>) -> Self {
        ScanPattern { order, scheme, grid }
    }

    /// `points` evenly spaced coordinates on `[0, 2π]`.
    pub fn over_period(order: usize, scheme: ScanScheme, points: usize) -> Self {
        Self::new(order, scheme, uniform_grid(0.0, TAU, points))
    }

    pub fn dense(order: usize, scheme: ScanScheme) -> Self {
        Self::over_period(order, scheme, DENSE_GRID_POINTS)
    }

    pub fn deltas(&self) -> Result<Vec<Vec<f64>>> {
        let line = self.scheme.linear(self.order)?;
        Ok(self.grid.iter().map(|&x| line.delta(x)).collect())
    }
}

pub fn uniform_grid(start: f64, end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (points - 1) as f64;
            (0..points).map(|i| start + step * i as f64).collect()
        }
    }
}

/// Evaluates the closed form along a scan.
pub fn scan(model: &SourceModel, pattern: &ScanPattern) -> Result<InterferencePattern> {
    if pattern.grid.is_empty() {
        return Err(Error::EmptyPattern);
    }
    let form = ClosedForm::for_order(model, pattern.order)?;
    let values = pattern
        .deltas()?
        .iter()
        .map(|d| form.evaluate(model, d))
        .collect();
    InterferencePattern::new(pattern.grid.clone(), values, None)
}

/// Maximal visibility reachable by classical sources of a given kind at a
/// given correlation order.
pub fn classical_limit(order: usize, kind: SourceKind) -> Result<f64> {
    let value = match (kind, order) {
        (SourceKind::Coherent, 2) => 1.0 / 2.0,
        (SourceKind::Coherent, 3) => 9.0 / 11.0,
        (SourceKind::Coherent, 4) => 17.0 / 18.0,
        (SourceKind::Thermal, 2) => 1.0 / 3.0,
        (SourceKind::Thermal, 3) => 3.0 / 5.0,
        (SourceKind::Thermal, 4) => 7.0 / 9.0,
        (SourceKind::Custom, _) => return Err(Error::BadScan("no tabulated limit for custom sources".into())),
        (_, n) => return Err(Error::UnsupportedOrder(n)),
    };
    Ok(value)
}

/// All six tabulated limits as `(kind, order, visibility)`.
pub fn classical_limit_table() -> Vec<(SourceKind, usize, f64)> {
    [SourceKind::Coherent, SourceKind::Thermal]
        .into_iter()
        .flat_map(|kind| (2..=4).map(move |order| (kind, order, classical_limit(order, kind).unwrap())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrema {
    pub x_max: f64,
    pub x_min: f64,
    pub g_max: f64,
    pub g_min: f64,
    pub visibility: f64,
}

/// Grid step of the coarse extremum search.
const SEARCH_STEP: f64 = 1e-3;
/// Derivative tolerance of the local refinement.
const SLOPE_TOL: f64 = 1e-10;

/// Locates the maximum and minimum of a scan over one period: a grid search
/// with step below 1e-3 rad, then safeguarded Newton iteration on the
/// derivative until `|g'| < 1e-10`.
pub fn extremal_phases(model: &SourceModel, order: usize, scheme: &ScanScheme) -> Result<Extrema> {
    let form = ClosedForm::for_order(model, order)?;
    let line = scheme.linear(order)?;
    // The envelope breaks periodicity, so the search interval is then closed.
    let periodic = model.coherence_width.is_none();
    let points = (TAU / SEARCH_STEP).ceil() as usize;
    let step = TAU / points as f64;
    let n_grid = if periodic { points } else { points + 1 };
    let grid: Vec<f64> = (0..n_grid).map(|i| step * i as f64).collect();
    let values: Vec<f64> = grid
        .iter()
        .map(|&x| form.evaluate(model, &line.delta(x)))
        .collect();
    let tie = 1e-12 * values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let (mut imax, mut imin) = (0, 0);
    for (i, &v) in values.iter().enumerate() {
        if v > values[imax] + tie {
            imax = i;
        }
        if v < values[imin] - tie {
            imin = i;
        }
    }
    let bounds = if periodic { (f64::NEG_INFINITY, f64::INFINITY) } else { (0.0, TAU) };
    let eval = |x: f64| form.evaluate_along(model, &line, x);
    let x_max = refine(eval, grid[imax], step, bounds);
    let x_min = refine(eval, grid[imin], step, bounds);
    let g_max = eval(x_max).0;
    let g_min = eval(x_min).0;
    let wrap = |x: f64| if periodic { x.rem_euclid(TAU) } else { x };
    Ok(Extrema {
        x_max: wrap(x_max),
        x_min: wrap(x_min),
        g_max,
        g_min,
        visibility: visibility(&[g_max, g_min])?,
    })
}

/// Root of `g'` in `[x0 - h, x0 + h]` clipped to `bounds`, Newton steps kept
/// inside a bisection bracket. Returns `x0` when there is no sign change,
/// which happens for an extremum on the interval boundary.
fn refine(eval: impl Fn(f64) -> (f64, f64, f64), x0: f64, h: f64, bounds: (f64, f64)) -> f64 {
    let slope = |x: f64| eval(x).1;
    if slope(x0).abs() < SLOPE_TOL {
        return x0;
    }
    let (mut lo, mut hi) = ((x0 - h).max(bounds.0), (x0 + h).min(bounds.1));
    let (mut s_lo, s_hi) = (slope(lo), slope(hi));
    if s_lo.abs() < SLOPE_TOL {
        return lo;
    }
    if s_hi.abs() < SLOPE_TOL {
        return hi;
    }
    if s_lo.signum() == s_hi.signum() {
        return x0;
    }
    let mut x = x0;
    for _ in 0..200 {
        let (_, d1, d2) = eval(x);
        if d1.abs() < SLOPE_TOL {
            return x;
        }
        if d1.signum() == s_lo.signum() {
            lo = x;
            s_lo = d1;
        } else {
            hi = x;
        }
        let newton = x - d1 / d2;
        x = if d2 != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 4.0 * f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Coordinate in `[0, π]` at which a single-detector scan reaches the
/// highest visibility, by grid search over the fixed `φ23` offset.
pub fn best_single_detector_offset(model: &SourceModel, offsets: &[f64]) -> Result<(f64, f64)> {
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for &phi23 in offsets {
        let v = scan(model, &ScanPattern::dense(3, ScanScheme::SingleDetector { phi23 }))?.visibility;
        if v > best.1 {
            best = (phi23, v);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn second_order_points() {
        let c = SourceModel::coherent();
        assert!(close(g2_point(&c, 0.0).unwrap(), 1.5, 1e-15));
        assert!(close(g2_point(&c, PI).unwrap(), 0.5, 1e-15));
        assert!(close(g2_point(&c, PI / 2.0).unwrap(), 1.0, 1e-15));
        let v = scan(&SourceModel::thermal(), &ScanPattern::dense(2, ScanScheme::SymmetricOpposite))
            .unwrap()
            .visibility;
        assert!(close(v, 1.0 / 3.0, 1e-12));
    }

    #[test]
    fn third_order_points() {
        let c = SourceModel::coherent();
        let t = SourceModel::thermal();
        let equal = PhaseConfig::new([0.3, 0.3, 0.3]);
        let spread = PhaseConfig::new([4.0 * PI / 3.0, 2.0 * PI / 3.0, 0.0]);
        assert!(close(g3_point(&c, &equal).unwrap(), 2.5, 1e-14));
        assert!(close(g3_point(&c, &spread).unwrap(), 0.25, 1e-14));
        assert!(close(g3_point(&t, &equal).unwrap(), 6.0, 1e-14));
        assert!(close(g3_point(&t, &spread).unwrap(), 1.5, 1e-14));
    }

    #[test]
    fn fourth_order_points() {
        let c = SourceModel::coherent();
        let t = SourceModel::thermal();
        let equal = PhaseConfig::new([1.0; 4]);
        let quarter = PhaseConfig::new([PI / 2.0, 0.0, -PI / 2.0, -PI]);
        assert!(close(g4_point(&c, &equal).unwrap(), 35.0 / 8.0, 1e-14));
        assert!(close(g4_point(&c, &quarter).unwrap(), 0.125, 1e-14));
        assert!(close(g4_point(&t, &equal).unwrap(), 24.0, 1e-13));
        assert!(close(g4_point(&t, &quarter).unwrap(), 3.0, 1e-13));
    }

    #[test]
    fn double_speed_scan_matches_polynomial_in_cosine() {
        // Along δ = (x, 0, -x, -2x) the fourth-order forms reduce to
        // quartics in c = cos x.
        let c_model = SourceModel::coherent();
        let t_model = SourceModel::thermal();
        for i in 0..50 {
            let x = 0.13 * i as f64;
            let c = x.cos();
            let cfg = PhaseConfig::new([x, 0.0, -x, -2.0 * x]);
            let coherent = c.powi(4) + 2.0 * c.powi(3) + 1.25 * c * c + 0.125;
            let thermal = 4.0 * c.powi(4) + 10.0 * c.powi(3) + 7.0 * c * c + 3.0;
            assert!(close(g4_point(&c_model, &cfg).unwrap(), coherent, 1e-12));
            assert!(close(g4_point(&t_model, &cfg).unwrap(), thermal, 1e-12));
        }
    }

    #[test]
    fn wrong_phase_count() {
        let err = g3_point(&SourceModel::coherent(), &PhaseConfig::new([0.0; 4])).unwrap_err();
        assert!(matches!(err, Error::PhaseCount { expected: 3, got: 4 }));
    }

    #[test]
    fn missing_moment_propagates() {
        let m = SourceModel::custom([(2, 1.5)]);
        assert!(matches!(
            g3_point(&m, &PhaseConfig::new([0.0; 3])),
            Err(Error::MissingMoment(3))
        ));
    }

    #[test]
    fn scan_visibilities() {
        let cases = [
            (SourceModel::coherent(), 3, ScanScheme::SymmetricOpposite, 9.0 / 11.0),
            (SourceModel::coherent(), 4, ScanScheme::FourPointDoubleSpeed, 17.0 / 18.0),
            (SourceModel::coherent(), 3, ScanScheme::SingleDetector { phi23: PI / 2.0 }, 0.5f64.sqrt()),
            (SourceModel::thermal(), 3, ScanScheme::SymmetricOpposite, 3.0 / 5.0),
            (SourceModel::thermal(), 4, ScanScheme::FourPointDoubleSpeed, 7.0 / 9.0),
        ];
        for (model, order, scheme, expected) in cases {
            let v = scan(&model, &ScanPattern::dense(order, scheme.clone())).unwrap().visibility;
            assert!(close(v, expected, 1e-9), "{scheme:?}: {v} vs {expected}");
        }
    }

    #[test]
    fn scheme_order_mismatch() {
        let p = ScanPattern::dense(3, ScanScheme::FourPointDoubleSpeed);
        assert!(matches!(scan(&SourceModel::coherent(), &p), Err(Error::SchemeOrder { .. })));
        let empty = ScanPattern::new(3, ScanScheme::SymmetricOpposite, vec![]);
        assert!(matches!(scan(&SourceModel::coherent(), &empty), Err(Error::EmptyPattern)));
    }

    #[test]
    fn limits_table() {
        assert_eq!(classical_limit(3, SourceKind::Coherent).unwrap(), 9.0 / 11.0);
        assert_eq!(classical_limit(4, SourceKind::Thermal).unwrap(), 7.0 / 9.0);
        assert_eq!(classical_limit(2, SourceKind::Coherent).unwrap(), 0.5);
        assert!(matches!(classical_limit(5, SourceKind::Coherent), Err(Error::UnsupportedOrder(5))));
        assert_eq!(classical_limit_table().len(), 6);
    }

    #[test]
    fn extremal_phase_search() {
        let e = extremal_phases(&SourceModel::coherent(), 3, &ScanScheme::SymmetricOpposite).unwrap();
        assert!(close(e.x_min, 2.0 * PI / 3.0, 1e-9), "x_min {}", e.x_min);
        assert!(close(e.visibility, 9.0 / 11.0, 1e-12));
        let e = extremal_phases(&SourceModel::coherent(), 4, &ScanScheme::FourPointDoubleSpeed).unwrap();
        assert!(close(e.x_min, PI / 2.0, 1e-9));
        assert!(close(e.visibility, 17.0 / 18.0, 1e-12));
        let e = extremal_phases(&SourceModel::thermal(), 4, &ScanScheme::FourPointDoubleSpeed).unwrap();
        assert!(close(e.x_min, PI / 2.0, 1e-9));
        assert!(close(e.x_max, 0.0, 1e-9));
        assert!(close(e.visibility, 7.0 / 9.0, 1e-12));
    }

    #[test]
    fn refined_extrema_have_vanishing_slope() {
        let base = SourceModel::custom([(2, 1.3), (3, 2.2), (4, 4.5)]);
        base.validate().unwrap();
        for (model, order, scheme) in [
            (base.clone(), 3, ScanScheme::SingleDetector { phi23: 0.7 }),
            (base.clone(), 4, ScanScheme::FourPointDoubleSpeed),
        ]
        .into_iter()
        .chain(
            [
                (3, ScanScheme::SymmetricOpposite),
                (3, ScanScheme::SingleDetector { phi23: 0.7 }),
                (4, ScanScheme::FourPointDoubleSpeed),
            ]
            .into_iter()
            .map(|(o, s)| (base.clone().with_coherence_width(Some(3.0)), o, s)),
        ) {
            let e = extremal_phases(&model, order, &scheme).unwrap();
            let form = ClosedForm::for_order(&model, order).unwrap();
            let line = scheme.linear(order).unwrap();
            for x in [e.x_max, e.x_min] {
                if x == 0.0 || x == TAU {
                    continue;
                }
                let (_, d1, _) = form.evaluate_along(&model, &line, x);
                assert!(d1.abs() < 1e-10, "{scheme:?} slope {d1} at {x}");
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let model = SourceModel::thermal().with_coherence_width(Some(2.0));
        let form = ClosedForm::fourth_order(&model).unwrap();
        let line = ScanScheme::Custom {
            velocity: vec![1.0, 0.3, -1.0, -2.0],
            offset: vec![0.1, 0.0, 0.4, -0.2],
        }
        .linear(4)
        .unwrap();
        let h = 1e-5;
        for i in 0..20 {
            let x = -2.0 + 0.2 * i as f64;
            let (v, d1, d2) = form.evaluate_along(&model, &line, x);
            assert!(close(v, form.evaluate(&model, &line.delta(x)), 1e-12));
            let f = |x| form.evaluate(&model, &line.delta(x));
            let fd1 = (f(x + h) - f(x - h)) / (2.0 * h);
            let fd2 = (f(x + h) - 2.0 * v + f(x - h)) / (h * h);
            assert!(close(d1, fd1, 1e-6 * (1.0 + d1.abs())), "d1 {d1} vs {fd1}");
            assert!(close(d2, fd2, 1e-3 * (1.0 + d2.abs())), "d2 {d2} vs {fd2}");
        }
    }

    #[test]
    fn single_detector_best_offset_is_quarter_turn() {
        let offsets = uniform_grid(0.0, PI, 181);
        let (best, v) = best_single_detector_offset(&SourceModel::coherent(), &offsets).unwrap();
        assert!(close(best, PI / 2.0, 1e-12));
        assert!(close(v, 0.5f64.sqrt(), 1e-9));
    }

    #[test]
    fn phase_average_is_constant_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (model, order) in [
            (SourceModel::coherent(), 3),
            (SourceModel::thermal(), 3),
            (SourceModel::thermal(), 4),
        ] {
            let form = ClosedForm::for_order(&model, order).unwrap();
            let n = 100_000;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let d: Vec<f64> = (0..order).map(|_| rng.random::<f64>() * TAU).collect();
                let v = form.evaluate(&model, &d);
                s += v;
                s2 += v * v;
            }
            let mean = s / n as f64;
            let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
            assert!((mean - form.constant).abs() < 5.0 * se, "{mean} vs {}", form.constant);
        }
        let g2 = 2.0;
        let g3 = 6.0;
        assert_eq!(
            ClosedForm::third_order(&SourceModel::thermal()).unwrap().constant,
            g3 / 4.0 + 0.75 * g2
        );
    }

    #[test]
    fn coherent_visibility_grows_with_order() {
        let c = SourceModel::coherent();
        let v: Vec<f64> = (2..=4)
            .map(|n| scan(&c, &ScanPattern::dense(n, ScanScheme::canonical(n))).unwrap().visibility)
            .collect();
        assert!(v[0] < v[1] && v[1] < v[2]);
    }

    #[test]
    fn envelope_lowers_visibility() {
        let pattern = ScanPattern::dense(3, ScanScheme::SymmetricOpposite);
        let mut last = f64::INFINITY;
        for w in [1e6, 20.0, 2.0 * PI, 3.0, 1.0, 0.3, 1e-3] {
            let m = SourceModel::thermal().with_coherence_width(Some(w));
            let v = scan(&m, &pattern).unwrap().visibility;
            assert!(v <= last + 1e-12, "width {w}: {v} > {last}");
            last = v;
        }
        let wide = SourceModel::thermal().with_coherence_width(Some(1e9));
        let v = scan(&wide, &pattern).unwrap().visibility;
        assert!(close(v, 0.6, 1e-9));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn valid_model() -> impl Strategy<Value = SourceModel> {
            (1.0f64..4.0, 1.0f64..3.0, 1.0f64..3.0, prop::option::of(0.1f64..20.0)).prop_map(
                |(g2, r3, r4, w)| {
                    let g3 = g2 * g2 * r3;
                    let g4 = g3 * g3 / g2 * r4;
                    SourceModel::custom([(2, g2), (3, g3), (4, g4)]).with_coherence_width(w)
                },
            )
        }

        fn phases(n: usize) -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-10.0f64..10.0, n)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(2000))]

            #[test]
            fn nonnegative(model in valid_model(), d3 in phases(3), d4 in phases(4), p in -10.0f64..10.0) {
                prop_assert!(g2_point(&model, p).unwrap() >= 0.0);
                prop_assert!(g3_point(&model, &PhaseConfig::new(d3)).unwrap() >= 0.0);
                prop_assert!(g4_point(&model, &PhaseConfig::new(d4)).unwrap() >= 0.0);
            }

            #[test]
            fn gauge_periodicity_and_permutation(
                g2 in 1.0f64..4.0, r3 in 1.0f64..3.0, r4 in 1.0f64..3.0,
                d in phases(4), shift in -5.0f64..5.0, j in 0usize..4, turns in -3i32..3,
                perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
            ) {
                let g3 = g2 * g2 * r3;
                let model = SourceModel::custom([(2, g2), (3, g3), (4, g3 * g3 / g2 * r4)]);
                let base4 = g4_point(&model, &PhaseConfig::new(d.clone())).unwrap();
                let base3 = g3_point(&model, &PhaseConfig::new(d[..3].to_vec())).unwrap();

                let shifted: Vec<f64> = d.iter().map(|x| x + shift).collect();
                prop_assert!((g4_point(&model, &PhaseConfig::new(shifted.clone())).unwrap() - base4).abs() < 1e-12 * base4.max(1.0));
                prop_assert!((g3_point(&model, &PhaseConfig::new(shifted[..3].to_vec())).unwrap() - base3).abs() < 1e-12 * base3.max(1.0));

                let mut wrapped = d.clone();
                wrapped[j] += TAU * f64::from(turns);
                prop_assert!((g4_point(&model, &PhaseConfig::new(wrapped)).unwrap() - base4).abs() < 1e-12 * base4.max(1.0));

                let permuted: Vec<f64> = perm.iter().map(|&i| d[i]).collect();
                prop_assert!((g4_point(&model, &PhaseConfig::new(permuted)).unwrap() - base4).abs() < 1e-12 * base4.max(1.0));
                let p3: Vec<usize> = perm.iter().copied().filter(|&i| i < 3).collect();
                let permuted3: Vec<f64> = p3.iter().map(|&i| d[i]).collect();
                prop_assert!((g3_point(&model, &PhaseConfig::new(permuted3)).unwrap() - base3).abs() < 1e-12 * base3.max(1.0));
            }
        }
    }
}
