//! Split-conformal calibration and certainty stratification for externally
//! scored binary findings.
//!
//! The crate takes per-case probability scores produced by some external
//! scorer (a multimodal model, a heuristic, anything that emits `p ∈ [0,1]`),
//! calibrates a nonconformity threshold on a held-out calibration split, and
//! partitions test cases into certainty strata with a finite-sample marginal
//! coverage guarantee. Alongside the conformal core it ships the supporting
//! pieces a reproducible evaluation needs: dataset ingestion with strict
//! validation, score transforms, stratified metrics, a small hypothesis-test
//! toolbox, and a synthetic Monte-Carlo harness that checks the coverage
//! guarantee end to end.
//!
//! The numeric kernels (transforms, conformal calibration, rank metrics) are
//! generic over the scalar type via [`scalar::Real`]; `f64` aliases for the
//! common instantiations live at the crate root. Everything downstream of the
//! kernels (file formats, statistics, reports) is `f64`.
//!
//! Determinism is a hard requirement: every randomized step (splitting,
//! permutation tests, synthetic generation) runs on a seeded ChaCha8 stream
//! with its own documented sampling code, so identical inputs and seeds give
//! byte-identical outputs across platforms.

pub mod conformal;
pub mod data;
pub mod evaluation;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod synthetic;
pub mod transforms;

/// Schema version stamped into every serialized output file.
pub const FORMAT_VERSION: u32 = 1;

/// Default significance levels, ascending.
pub const DEFAULT_ALPHAS: [f64; 3] = [0.05, 0.10, 0.20];

/// Default calibration fraction for the global split.
pub const DEFAULT_CALIBRATION_FRACTION: f64 = 0.3;

/// `f64` instantiations of the generic kernels, for pipeline code.
pub type MinMaxFit = transforms::MinMaxFit<f64>;
pub type NonconformityScore = conformal::NonconformityScore<f64>;
pub type Tau = conformal::Tau<f64>;
pub type CalibratedThreshold = conformal::CalibratedThreshold<f64>;
