//! Multi-photon intensity interference of two classical light sources.
//!
//! Two sources with identical statistics and independently fluctuating
//! relative phase illuminate `n` detectors. Their first-order fringes wash
//! out, but the normalized `n`-th order intensity correlation functions
//! (ICFs) keep a fringe pattern whose visibility grows with `n`.
//!
//! - [`source`]: source statistics and sampling.
//! - [`analytic`]: closed-form ICFs for 2, 3 and 4 detectors, scans,
//!   visibility extraction and the classical visibility limits.
//! - [`oracle`]: the same ICFs by exhaustive expansion, to any order up to 8.
//! - [`montecarlo`]: sampled estimates with batch standard errors.
//! - [`frames`]: synthetic camera stacks and the frame-stack estimators.

pub mod analytic;
pub mod error;
pub mod frames;
pub mod montecarlo;
pub mod oracle;
pub mod pattern;
pub mod source;

pub use error::{Error, Result};
pub use pattern::{visibility, InterferencePattern};
pub use source::{Realization, SourceKind, SourceModel};
