//! Monte Carlo estimation of normalized ICFs.
//!
//! Every (grid point, batch) pair owns its own ChaCha stream, so results
//! depend only on the seed and never on how work is spread over threads.
//! The estimate normalizes the mean product by the product of the sample
//! mean intensities, the same ratio an experiment forms from its counts.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::ScanPattern;
use crate::error::{Error, Result};
use crate::pattern::InterferencePattern;
use crate::source::{SourceKind, SourceModel};

pub const DEFAULT_BATCHES: usize = 100;
pub const DEFAULT_SEED: u64 = 20_070_301;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McSettings {
    pub n_samples: usize,
    pub n_batches: usize,
    pub seed: u64,
    /// Thread count; `None` uses the global pool. Never affects results.
    pub workers: Option<usize>,
}

impl McSettings {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        McSettings {
            n_samples,
            n_batches: DEFAULT_BATCHES,
            seed,
            workers: None,
        }
    }

    pub fn with_batches(mut self, n_batches: usize) -> Self {
        self.n_batches = n_batches;
        self
    }

    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }

    fn check(&self) -> Result<usize> {
        if self.n_batches < 10 || self.n_samples == 0 || self.n_samples % self.n_batches != 0 {
            return Err(Error::BadBatching {
                n_samples: self.n_samples,
                n_batches: self.n_batches,
            });
        }
        Ok(self.n_samples / self.n_batches)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcfEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub n_batches: usize,
}

/// Raw sums of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSums {
    pub count: usize,
    pub product_sum: f64,
    pub intensity_sums: Vec<f64>,
}

impl BatchSums {
    fn new(detectors: usize) -> Self {
        BatchSums {
            count: 0,
            product_sum: 0.0,
            intensity_sums: vec![0.0; detectors],
        }
    }

    /// `mean(∏ I_j) / ∏ mean(I_j)` within this batch.
    pub fn ratio(&self) -> f64 {
        let n = self.count as f64;
        let denom: f64 = self.intensity_sums.iter().map(|s| s / n).product();
        (self.product_sum / n) / denom
    }
}

/// Per-batch sums keyed by batch index. Merging is a keyed union, so the
/// final estimate is independent of the order in which batches arrive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IcfAccumulator {
    batches: BTreeMap<u64, BatchSums>,
}

impl IcfAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, index: u64, sums: BatchSums) {
        let previous = self.batches.insert(index, sums);
        assert!(previous.is_none(), "batch {index} accumulated twice");
    }

    pub fn merge(mut self, other: IcfAccumulator) -> Self {
        for (index, sums) in other.batches {
            self.insert(index, sums);
        }
        self
    }

    pub fn batch_ratios(&self) -> Vec<f64> {
        self.batches.values().map(BatchSums::ratio).collect()
    }

    pub fn estimate(&self) -> IcfEstimate {
        let mut total: Option<BatchSums> = None;
        for sums in self.batches.values() {
            match total.as_mut() {
                None => total = Some(sums.clone()),
                Some(t) => {
                    t.count += sums.count;
                    t.product_sum += sums.product_sum;
                    for (a, b) in t.intensity_sums.iter_mut().zip(&sums.intensity_sums) {
                        *a += b;
                    }
                }
            }
        }
        let Some(total) = total else {
            return IcfEstimate {
                value: f64::NAN,
                stderr: f64::NAN,
                n_samples: 0,
                n_batches: 0,
            };
        };
        let ratios = self.batch_ratios();
        IcfEstimate {
            value: total.ratio(),
            stderr: standard_error(&ratios),
            n_samples: total.count,
            n_batches: ratios.len(),
        }
    }
}

/// Standard error of the mean of `xs` (sample standard deviation / sqrt(n)).
pub fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Per-detector attenuation of the interference term,
/// `exp(-δ_j² / (2 w²))`, or all ones without a coherence width.
pub fn coherence_envelope_apply(model: &SourceModel, delta: &[f64]) -> Result<Vec<f64>> {
    if let Some(w) = model.coherence_width {
        if !(w > 0.0) {
            return Err(Error::NonpositiveWidth(w));
        }
    }
    Ok(delta.iter().map(|&d| model.coherence_factor(d)).collect())
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn stream_id(point: usize, batch: usize) -> u64 {
    ((point as u64) << 32) | batch as u64
}

fn run_batch(model: &SourceModel, delta: &[f64], gamma: &[f64], size: usize, mut rng: ChaCha8Rng) -> Result<BatchSums> {
    let mut sums = BatchSums::new(delta.len());
    for _ in 0..size {
        let r = model.sample(&mut rng)?;
        let mut product = 1.0;
        for ((d, g), s) in delta.iter().zip(gamma).zip(sums.intensity_sums.iter_mut()) {
            let i = r.intensity_at(*d, *g);
            product *= i;
            *s += i;
        }
        sums.product_sum += product;
    }
    sums.count = size;
    Ok(sums)
}

fn check_model(model: &SourceModel) -> Result<()> {
    model.validate()?;
    if model.kind == SourceKind::Custom {
        return Err(Error::CustomModelNotSamplable);
    }
    Ok(())
}

fn in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::BadScan(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Accumulates every batch of every point; accumulators come back in
/// point order.
fn accumulate(model: &SourceModel, deltas: &[Vec<f64>], settings: &McSettings) -> Result<Vec<IcfAccumulator>> {
    check_model(model)?;
    let size = settings.check()?;
    let gammas = deltas
        .iter()
        .map(|d| coherence_envelope_apply(model, d))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..deltas.len())
        .flat_map(|p| (0..settings.n_batches).map(move |b| (p, b)))
        .collect();
    let results: Vec<Result<BatchSums>> = in_pool(settings.workers, || {
        jobs.par_iter()
            .map(|&(p, b)| {
                let rng = stream_rng(settings.seed, stream_id(p, b));
                run_batch(model, &deltas[p], &gammas[p], size, rng)
            })
            .collect()
    })?;
    let mut accs = vec![IcfAccumulator::new(); deltas.len()];
    for ((p, b), sums) in jobs.into_iter().zip(results) {
        accs[p].insert(b as u64, sums?);
    }
    Ok(accs)
}

/// Estimates the normalized ICF at detector phases `delta`.
pub fn estimate_icf(model: &SourceModel, delta: &[f64], settings: &McSettings) -> Result<IcfEstimate> {
    let accs = accumulate(model, std::slice::from_ref(&delta.to_vec()), settings)?;
    Ok(accs[0].estimate())
}

/// One estimate per grid point of `pattern`, each on its own streams.
pub fn estimate_scan(model: &SourceModel, pattern: &ScanPattern, settings: &McSettings) -> Result<InterferencePattern> {
    if pattern.grid.is_empty() {
        return Err(Error::EmptyPattern);
    }
    let deltas = pattern.deltas()?;
    let estimates: Vec<IcfEstimate> = accumulate(model, &deltas, settings)?
        .iter()
        .map(IcfAccumulator::estimate)
        .collect();
    InterferencePattern::new(
        pattern.grid.clone(),
        estimates.iter().map(|e| e.value).collect(),
        Some(estimates.iter().map(|e| e.stderr).collect()),
    )
}
