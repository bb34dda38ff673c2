//! Synthetic score generator with known ground truth, and the Monte-Carlo
//! harness that checks the conformal coverage guarantee against it.
//!
//! The generative model: gt ~ Bernoulli(base_rate); a latent score is drawn
//! from N(+separability/2, 1) for positives and N(−separability/2, 1) for
//! negatives; the reported probability is logistic(latent + miscalibration).
//! Separability controls how informative scores are (0 = pure noise),
//! miscalibration shifts every logit without changing ranking, so AUROC is
//! invariant to it while calibration-sensitive quantities move.

use serde::Serialize;
use thiserror::Error;

use crate::conformal::{self, Tau};
use crate::data::{Alpha, Label, LabeledScore};
use crate::rng;
use crate::stats::special::normal_ppf;
use crate::transforms;

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("n_cases must be at least 1")]
    NoCases,
    #[error("base_rate {value} outside the open interval (0, 1)")]
    BadBaseRate { value: f64 },
    #[error("separability {value} must be finite and nonnegative")]
    BadSeparability { value: f64 },
    #[error("miscalibration must be finite")]
    BadMiscalibration,
    #[error("coverage trial needs n_cal ≥ 1, n_test ≥ 1, n_trials ≥ 1")]
    BadTrialShape,
}

/// Finding name stamped on generated rows.
pub const SYNTHETIC_FINDING: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticSpec {
    pub n_cases: usize,
    pub base_rate: f64,
    pub separability: f64,
    pub miscalibration: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.n_cases == 0 {
            return Err(SyntheticError::NoCases);
        }
        if !self.base_rate.is_finite() || self.base_rate <= 0.0 || self.base_rate >= 1.0 {
            return Err(SyntheticError::BadBaseRate { value: self.base_rate });
        }
        if !self.separability.is_finite() || self.separability < 0.0 {
            return Err(SyntheticError::BadSeparability { value: self.separability });
        }
        if !self.miscalibration.is_finite() {
            return Err(SyntheticError::BadMiscalibration);
        }
        Ok(())
    }
}

/// Generates `n_cases` labeled rows. Each case consumes exactly two uniform
/// draws (label, then latent), so row i is a pure function of (seed, i).
pub fn generate_binary_scores(spec: &SyntheticSpec) -> Result<Vec<LabeledScore>, SyntheticError> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let half_sep = spec.separability / 2.0;
    let rows = (0..spec.n_cases)
        .map(|i| {
            let gt = if rng::uniform_open01(&mut rng) < spec.base_rate {
                Label::Pos
            } else {
                Label::Neg
            };
            let center = match gt {
                Label::Pos => half_sep,
                Label::Neg => -half_sep,
            };
            let latent = center + normal_ppf(rng::uniform_open01(&mut rng));
            let p_yes = transforms::logistic(latent + spec.miscalibration);
            LabeledScore {
                case_id: format!("synth-{i:06}"),
                finding: SYNTHETIC_FINDING.to_string(),
                p_yes,
                gt: Some(gt),
            }
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageTrialResult {
    pub alpha: Alpha,
    pub n_cal: usize,
    pub n_test: usize,
    pub n_trials: usize,
    pub mean_coverage: f64,
    pub coverage_stddev: f64,
    /// Lower edge of the finite-sample guarantee, 1 − α.
    pub guarantee_lo: f64,
    /// Upper edge, 1 − α + 1/(n_cal + 1).
    pub guarantee_hi: f64,
}

/// Compensated (Kahan) accumulator; trial coverages are all O(1) so plain
/// summation would already be fine at 1e-13, but the harness promises its
/// mean is summation-order exact to well below the reported stddev.
#[derive(Default)]
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
    fn value(&self) -> f64 {
        self.sum
    }
}

/// Runs `n_trials` independent draw → calibrate → score cycles and reports
/// the empirical mean coverage next to the theoretical band.
///
/// Each trial reseeds the generator with `derive_seed(seed, trial)`, so the
/// trial set is embarrassingly parallel in principle; the sequential loop
/// here keeps the reduction order (and thus every output byte) fixed.
pub fn coverage_trial(
    spec: &SyntheticSpec,
    alpha: Alpha,
    n_cal: usize,
    n_test: usize,
    n_trials: usize,
    seed: u64,
) -> Result<CoverageTrialResult, SyntheticError> {
    coverage_trial_with_rank_offset(spec, alpha, n_cal, n_test, n_trials, seed, 0)
}

/// Same as [`coverage_trial`] but with a rank offset injected into the
/// quantile computation (fault-injection hook for the coverage validator;
/// offset 0 is the nominal path).
pub fn coverage_trial_with_rank_offset(
    spec: &SyntheticSpec,
    alpha: Alpha,
    n_cal: usize,
    n_test: usize,
    n_trials: usize,
    seed: u64,
    rank_offset: i64,
) -> Result<CoverageTrialResult, SyntheticError> {
    spec.validate()?;
    if n_cal == 0 || n_test == 0 || n_trials == 0 {
        return Err(SyntheticError::BadTrialShape);
    }
    let mut coverages = Vec::with_capacity(n_trials);
    let mut mean_acc = KahanSum::default();
    for trial in 0..n_trials {
        let trial_spec = SyntheticSpec {
            n_cases: n_cal + n_test,
            seed: rng::derive_seed(seed, trial as u64),
            ..spec.clone()
        };
        // Rows are iid, so the first n_cal form an exchangeable calibration
        // split without shuffling.
        let rows = generate_binary_scores(&trial_spec)?;
        let (cal, test) = rows.split_at(n_cal);
        let cal_scores: Vec<conformal::NonconformityScore<f64>> = cal
            .iter()
            .map(|r| {
                conformal::ncs(r.p_yes, r.gt.expect("generated rows carry gt"))
                    .expect("generated p in [0,1]")
            })
            .collect();
        let tau = calibrate_with_offset(&cal_scores, alpha, rank_offset);
        let threshold = conformal::CalibratedThreshold {
            scope: SYNTHETIC_FINDING.to_string(),
            alpha,
            tau,
            n_cal,
            rank_k: conformal::conformal_rank(n_cal, alpha),
        };
        let mut hits = 0usize;
        for r in test {
            let set = conformal::prediction_set(r.p_yes, &threshold)
                .expect("generated p in [0,1]");
            if set.contains(r.gt.expect("generated rows carry gt")) {
                hits += 1;
            }
        }
        let cov = hits as f64 / n_test as f64;
        mean_acc.add(cov);
        coverages.push(cov);
    }
    let mean = mean_acc.value() / n_trials as f64;
    let stddev = if n_trials == 1 {
        0.0
    } else {
        let mut ss = KahanSum::default();
        for c in &coverages {
            ss.add((c - mean) * (c - mean));
        }
        (ss.value() / (n_trials as f64 - 1.0)).sqrt()
    };
    Ok(CoverageTrialResult {
        alpha,
        n_cal,
        n_test,
        n_trials,
        mean_coverage: mean,
        coverage_stddev: stddev,
        guarantee_lo: 1.0 - alpha.value(),
        guarantee_hi: 1.0 - alpha.value() + 1.0 / (n_cal as f64 + 1.0),
    })
}

fn calibrate_with_offset(
    cal_scores: &[conformal::NonconformityScore<f64>],
    alpha: Alpha,
    rank_offset: i64,
) -> Tau<f64> {
    let n = cal_scores.len();
    let k = conformal::conformal_rank(n, alpha) as i64 + rank_offset;
    let k = k.max(1) as usize;
    if k > n {
        return Tau::Infinite;
    }
    let mut values: Vec<f64> = cal_scores.iter().map(|s| s.value()).collect();
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    Tau::Finite(values[k - 1])
}
