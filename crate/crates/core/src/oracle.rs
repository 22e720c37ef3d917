//! First-principles ICF of `n` detectors by exhaustive expansion.
//!
//! Every detector intensity `I_j = I_A + I_B + sqrt(I_A I_B) (e^{i(θ+δ_j)} + e^{-i(θ+δ_j)})`
//! is a sum of four tokens: `A`, `B`, `+` and `-`. Expanding `∏_j I_j`
//! gives `4^n` token assignments. Averaging over the uniform relative phase
//! `θ` kills every assignment whose `+` and `-` counts differ; a balanced
//! assignment with `a` A-tokens, `b` B-tokens and `m` pairs contributes
//! `<I_A^{a+m}> <I_B^{b+m}> e^{i(Σ₊δ - Σ₋δ)}`. Dividing by `∏<I_j> = (2<I>)^n`
//! turns the source moments into normalized `g(a+m) g(b+m) / 2^n`.
//!
//! Nothing here shares code with [`crate::analytic`]; the two routes are
//! compared in [`verify_closed_form`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytic::{icf_point, PhaseConfig};
use crate::error::{Error, Result};
use crate::source::SourceModel;

pub const MAX_ORDER: usize = 8;

/// One balanced token assignment. Detector sets are bit masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionTerm {
    pub a_count: u32,
    pub b_count: u32,
    pub plus_set: u16,
    pub minus_set: u16,
    pub weight: f64,
}

impl ExpansionTerm {
    pub fn pairs(&self) -> u32 {
        self.plus_set.count_ones()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub imag_residue: f64,
    /// Assignments visited, always `4^n`.
    pub enumerated: u64,
    /// Assignments with equal `+` and `-` counts.
    pub balanced: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    re: f64,
    im: f64,
    enumerated: u64,
    balanced: u64,
}

impl Partial {
    fn merge(self, other: Partial) -> Partial {
        Partial {
            re: self.re + other.re,
            im: self.im + other.im,
            enumerated: self.enumerated + other.enumerated,
            balanced: self.balanced + other.balanced,
        }
    }
}

struct Expansion {
    n: usize,
    moments: Vec<f64>,
    delta: Vec<f64>,
    gamma: Vec<f64>,
}

impl Expansion {
    fn new(model: &SourceModel, delta: &[f64]) -> Result<Self> {
        let n = delta.len();
        if n > MAX_ORDER {
            return Err(Error::OrderTooLarge(n));
        }
        let moments = (0..=n as u32).map(|k| model.moment(k)).collect::<Result<Vec<_>>>()?;
        Ok(Expansion {
            n,
            moments,
            delta: delta.to_vec(),
            gamma: delta.iter().map(|&d| model.coherence_factor(d)).collect(),
        })
    }

    fn total(&self) -> u64 {
        1u64 << (2 * self.n)
    }

    /// Decodes assignment `index` (base-4 digits, detector 0 lowest).
    fn term(&self, index: u64) -> Option<ExpansionTerm> {
        let (mut a, mut b) = (0u32, 0u32);
        let (mut plus, mut minus) = (0u16, 0u16);
        let mut rest = index;
        for j in 0..self.n {
            match rest & 3 {
                0 => a += 1,
                1 => b += 1,
                2 => plus |= 1 << j,
                _ => minus |= 1 << j,
            }
            rest >>= 2;
        }
        if plus.count_ones() != minus.count_ones() {
            return None;
        }
        let m = plus.count_ones();
        let weight = self.moments[(a + m) as usize] * self.moments[(b + m) as usize]
            / f64::powi(2.0, self.n as i32);
        Some(ExpansionTerm {
            a_count: a,
            b_count: b,
            plus_set: plus,
            minus_set: minus,
            weight,
        })
    }

    fn contribution(&self, t: &ExpansionTerm) -> (f64, f64) {
        let mut phase = 0.0;
        let mut envelope = 1.0;
        for j in 0..self.n {
            let bit = 1u16 << j;
            if t.plus_set & bit != 0 {
                phase += self.delta[j];
                envelope *= self.gamma[j];
            } else if t.minus_set & bit != 0 {
                phase -= self.delta[j];
                envelope *= self.gamma[j];
            }
        }
        let amp = t.weight * envelope;
        (amp * phase.cos(), amp * phase.sin())
    }

    fn sum_range(&self, range: std::ops::Range<u64>) -> Partial {
        let mut p = Partial::default();
        for index in range {
            p.enumerated += 1;
            if let Some(t) = self.term(index) {
                p.balanced += 1;
                let (re, im) = self.contribution(&t);
                p.re += re;
                p.im += im;
            }
        }
        p
    }
}

fn finish(p: Partial) -> OracleResult {
    OracleResult {
        value: p.re,
        imag_residue: p.im.abs(),
        enumerated: p.enumerated,
        balanced: p.balanced,
    }
}

/// Normalized `n`-detector ICF `<∏ I_j> / ∏ <I_j>` for detector phases `delta`.
pub fn icf_general(model: &SourceModel, delta: &[f64]) -> Result<f64> {
    Ok(icf_general_detailed(model, delta)?.value)
}

pub fn icf_general_detailed(model: &SourceModel, delta: &[f64]) -> Result<OracleResult> {
    let exp = Expansion::new(model, delta)?;
    Ok(finish(exp.sum_range(0..exp.total())))
}

/// Same sum split into `parts` contiguous index ranges evaluated in
/// parallel and merged in range order.
pub fn icf_general_partitioned(model: &SourceModel, delta: &[f64], parts: usize) -> Result<OracleResult> {
    let exp = Expansion::new(model, delta)?;
    let total = exp.total();
    let parts = (parts.max(1) as u64).min(total);
    let chunk = total.div_ceil(parts);
    let partials: Vec<Partial> = (0..parts)
        .into_par_iter()
        .map(|i| exp.sum_range(i * chunk..((i + 1) * chunk).min(total)))
        .collect();
    Ok(finish(partials.into_iter().fold(Partial::default(), Partial::merge)))
}

/// All balanced terms of the order-`n` expansion, in enumeration order.
pub fn expansion_terms(model: &SourceModel, n: usize) -> Result<Vec<ExpansionTerm>> {
    let exp = Expansion::new(model, &vec![0.0; n])?;
    Ok((0..exp.total()).filter_map(|i| exp.term(i)).collect())
}

/// Draws random valid moment tables and phase tuples and returns the largest
/// absolute difference between the expansion and the closed form.
pub fn verify_closed_form(order: usize, trials: usize) -> Result<f64> {
    verify_closed_form_seeded(order, trials, 0x5eed_0c0f)
}

pub fn verify_closed_form_seeded(order: usize, trials: usize, seed: u64) -> Result<f64> {
    if !(2..=4).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials.max(1) {
        let model = random_valid_model(&mut rng);
        let delta: Vec<f64> = (0..order)
            .map(|_| rng.random_range(-2.0 * std::f64::consts::TAU..2.0 * std::f64::consts::TAU))
            .collect();
        let expanded = icf_general(&model, &delta)?;
        let closed = icf_point(&model, &PhaseConfig::new(delta))?;
        worst = worst.max((expanded - closed).abs());
    }
    Ok(worst)
}

/// A custom model satisfying `g2 >= 1`, `g3 >= g2²`, `g4 g2 >= g3²`;
/// half of the draws also carry a finite coherence width.
pub fn random_valid_model<R: Rng + ?Sized>(rng: &mut R) -> SourceModel {
    let g2 = rng.random_range(1.0..4.0);
    let g3 = g2 * g2 * rng.random_range(1.0..3.0);
    let g4 = g3 * g3 / g2 * rng.random_range(1.0..3.0);
    let width = rng.random_bool(0.5).then(|| rng.random_range(0.5..10.0));
    SourceModel::custom([(2, g2), (3, g3), (4, g4)]).with_coherence_width(width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{g2_point, g3_point, g4_point};
    use std::f64::consts::PI;

    fn binomial(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn first_order_normalizes() {
        for model in [SourceModel::coherent(), SourceModel::thermal()] {
            for d in [0.0, 1.3, -4.0] {
                assert!((icf_general(&model, &[d]).unwrap() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reproduces_closed_form_examples() {
        let c = SourceModel::coherent();
        let t = SourceModel::thermal();
        assert!((icf_general(&c, &[0.0, 0.0, 0.0]).unwrap() - 2.5).abs() < 1e-14);
        assert!((icf_general(&t, &[PI / 2.0, 0.0, -PI / 2.0, -PI]).unwrap() - 3.0).abs() < 1e-13);
        assert!((icf_general(&c, &[PI, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((icf_general(&c, &[PI, 0.0]).unwrap() - g2_point(&c, PI).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn equal_phases_sum_constant_and_cosine_weights() {
        // At equal phases every cosine is 1: g3/4 + 3g2/4 + 3 (g2/2).
        let m = SourceModel::custom([(2, 1.7), (3, 4.0), (4, 12.0)]);
        let got = icf_general(&m, &[0.4; 3]).unwrap();
        assert!((got - (4.0 / 4.0 + 0.75 * 1.7 + 1.5 * 1.7)).abs() < 1e-13);
    }

    #[test]
    fn enumerates_four_to_the_n() {
        let m = SourceModel::thermal();
        for n in 1..=MAX_ORDER {
            let r = icf_general_detailed(&m, &vec![0.1; n]).unwrap();
            assert_eq!(r.enumerated, 4u64.pow(n as u32));
            let n = n as u64;
            let balanced: u64 = (0..=n / 2)
                .map(|k| binomial(n, k) * binomial(n - k, k) * 2u64.pow((n - 2 * k) as u32))
                .sum();
            assert_eq!(r.balanced, balanced);
        }
        let terms = expansion_terms(&m, 3).unwrap();
        assert_eq!(terms.len(), 20);
        for t in &terms {
            assert_eq!(t.a_count + t.b_count + 2 * t.pairs(), 3);
            assert_eq!(t.plus_set & t.minus_set, 0);
        }
    }

    #[test]
    fn order_budget_and_missing_moments() {
        assert!(matches!(
            icf_general(&SourceModel::coherent(), &[0.0; 9]),
            Err(Error::OrderTooLarge(9))
        ));
        assert!(matches!(
            icf_general(&SourceModel::custom([(2, 2.0), (3, 6.0)]), &[0.0; 4]),
            Err(Error::MissingMoment(4))
        ));
    }

    #[test]
    fn imaginary_part_cancels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..=6 {
            for _ in 0..20 {
                let model = random_valid_model(&mut rng);
                let model = SourceModel::thermal().with_coherence_width(model.coherence_width);
                let d: Vec<f64> = (0..n).map(|_| rng.random_range(-7.0..7.0)).collect();
                let r = icf_general_detailed(&model, &d).unwrap();
                assert!(r.imag_residue < 1e-12 * r.value.max(1.0), "{r:?}");
            }
        }
    }

    #[test]
    fn partitioning_does_not_change_result() {
        let m = SourceModel::thermal();
        let d = [0.3, -1.2, 2.2, 0.9, -0.4, 1.7, 3.1];
        let whole = icf_general_detailed(&m, &d).unwrap();
        for parts in [1, 2, 3, 7, 64, 1000] {
            let split = icf_general_partitioned(&m, &d, parts).unwrap();
            assert!((split.value - whole.value).abs() < 1e-12 * whole.value);
            assert_eq!(split.enumerated, whole.enumerated);
            assert_eq!(split.balanced, whole.balanced);
        }
    }

    #[test]
    fn closed_forms_certified() {
        assert!(verify_closed_form(2, 1000).unwrap() < 1e-12);
        assert!(verify_closed_form(3, 1000).unwrap() < 1e-10);
        assert!(verify_closed_form(4, 1000).unwrap() < 1e-10);
        assert!(matches!(verify_closed_form(5, 10), Err(Error::UnsupportedOrder(5))));
    }

    #[test]
    fn matches_named_point_functions() {
        let m = SourceModel::custom([(2, 1.4), (3, 2.5), (4, 6.0)]);
        let d3 = [0.2, 1.9, -0.7];
        let d4 = [0.2, 1.9, -0.7, 2.6];
        assert!((icf_general(&m, &d3).unwrap() - g3_point(&m, &PhaseConfig::new(d3)).unwrap()).abs() < 1e-13);
        assert!((icf_general(&m, &d4).unwrap() - g4_point(&m, &PhaseConfig::new(d4)).unwrap()).abs() < 1e-13);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(500))]

            #[test]
            fn nonnegative_gauge_and_periodic(
                seed in any::<u64>(),
                n in 1usize..=6,
                shift in -5.0f64..5.0,
                turns in -2i32..=2,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                // higher orders need higher moments: use the thermal table
                let model = if n <= 4 { random_valid_model(&mut rng).with_coherence_width(None) } else { SourceModel::thermal() };
                let d: Vec<f64> = (0..n).map(|_| rng.random_range(-7.0..7.0)).collect();
                let base = icf_general(&model, &d).unwrap();
                prop_assert!(base >= -1e-12);
                let shifted: Vec<f64> = d.iter().map(|x| x + shift).collect();
                prop_assert!((icf_general(&model, &shifted).unwrap() - base).abs() < 1e-12 * base.max(1.0));
                let mut wrapped = d.clone();
                wrapped[n - 1] += std::f64::consts::TAU * f64::from(turns);
                prop_assert!((icf_general(&model, &wrapped).unwrap() - base).abs() < 1e-12 * base.max(1.0));
            }
        }
    }
}
