//! Hypothesis tests used to compare certainty strata.
//!
//! The toolkit only ever compares two groups of scalar values (metric inputs
//! or similarity scores), so the surface is small: normality screening
//! (Shapiro–Wilk), a parametric and a rank-based location test, correlation
//! with a t-based significance, and a permutation test for AUROC deltas.
//! Test selection is automated by [`choose_location_test`] and recorded in
//! the result so reports can show which branch ran.

pub mod shapiro;
pub mod special;

use serde::Serialize;
use thiserror::Error;

use crate::data::Label;
use crate::rng;
use special::{normal_cdf, t_cdf};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("{test} needs at least {min} samples per group, got {n}")]
    TooFewSamples { test: &'static str, n: usize, min: usize },
    #[error("{test} supports at most {max} samples, got {n}")]
    TooManySamples { test: &'static str, n: usize, max: usize },
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("sample has zero range (all values identical)")]
    ZeroRange,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("zero variance makes the statistic undefined")]
    ZeroVariance,
    #[error("degenerate input: {reason}")]
    Degenerate { reason: String },
    #[error("not computable: {reason}")]
    NotComputable { reason: String },
    #[error("permutation test needs at least {min} permutations, got {n_perm}")]
    TooFewPermutations { n_perm: usize, min: usize },
}

fn ensure_finite(values: &[f64]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// 1-based ranks with ties replaced by the mean rank of the tie group.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Tie block spans sorted positions i..=j; mean of ranks i+1 ..= j+1.
        let mean_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewSamples { test: "pearson", n: x.len(), min: 2 });
    }
    ensure_finite(x)?;
    ensure_finite(y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    // Rounding can push perfectly collinear data a hair past ±1.
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson on midranks, so ties are averaged.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { left: x.len(), right: y.len() });
    }
    ensure_finite(x)?;
    ensure_finite(y)?;
    pearson(&midranks(x), &midranks(y))
}

/// Two-sided significance of a correlation coefficient against zero, using
/// t = r sqrt((n−2)/(1−r²)) on n−2 degrees of freedom.
pub fn correlation_t_test(r: f64, n: usize) -> Result<(f64, f64), StatsError> {
    if n < 3 {
        return Err(StatsError::TooFewSamples { test: "correlation-t", n, min: 3 });
    }
    if !r.is_finite() || r.abs() > 1.0 {
        return Err(StatsError::NonFinite);
    }
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        // |r| = 1: the statistic diverges and the tail mass is zero.
        return Ok((if r > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY }, 0.0));
    }
    let t = r * (df / denom).sqrt();
    let p = 2.0 * t_cdf(-t.abs(), df);
    Ok((t, p.min(1.0)))
}

/// Which location test produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationTestKind {
    WelchT,
    MannWhitneyU,
}

impl LocationTestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LocationTestKind::WelchT => "welch_t",
            LocationTestKind::MannWhitneyU => "mann_whitney_u",
        }
    }
}

/// Outcome of a two-group location comparison. The Shapiro p-values are
/// populated only when [`choose_location_test`] ran the normality screen.
#[derive(Debug, Clone, Serialize)]
pub struct LocationTestResult {
    pub test: LocationTestKind,
    pub statistic: f64,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shapiro_p_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shapiro_p_b: Option<f64>,
}

/// Welch's unequal-variance t-test, two-sided, with Welch–Satterthwaite
/// degrees of freedom. Needs two values per group for a variance estimate.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<LocationTestResult, StatsError> {
    let min_n = a.len().min(b.len());
    if min_n < 2 {
        return Err(StatsError::TooFewSamples { test: "welch-t", n: min_n, min: 2 });
    }
    ensure_finite(a)?;
    ensure_finite(b)?;
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let va = a.iter().map(|v| (v - ma) * (v - ma)).sum::<f64>() / (na - 1.0);
    let vb = b.iter().map(|v| (v - mb) * (v - mb)).sum::<f64>() / (nb - 1.0);
    if va == 0.0 && vb == 0.0 {
        if ma == mb {
            // Identical constants on both sides: no evidence of a shift.
            return Ok(LocationTestResult {
                test: LocationTestKind::WelchT,
                statistic: 0.0,
                p_value: 1.0,
                shapiro_p_a: None,
                shapiro_p_b: None,
            });
        }
        return Err(StatsError::Degenerate {
            reason: "both groups are constant with different means".into(),
        });
    }
    let sa = va / na;
    let sb = vb / nb;
    let se = (sa + sb).sqrt();
    let t = (ma - mb) / se;
    let df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = (2.0 * t_cdf(-t.abs(), df)).min(1.0);
    Ok(LocationTestResult {
        test: LocationTestKind::WelchT,
        statistic: t,
        p_value: p,
        shapiro_p_a: None,
        shapiro_p_b: None,
    })
}

/// Threshold below which the exact permutation null is enumerated instead of
/// the normal approximation (and only when the pooled sample is tie-free).
const MW_EXACT_MAX_POOLED: usize = 10;

/// Mann–Whitney U, two-sided. Statistic is min(U1, U2).
///
/// Exact enumeration of all rank assignments when the pooled size is at most
/// [`MW_EXACT_MAX_POOLED`] and there are no ties; otherwise the tie-corrected
/// normal approximation with a 0.5 continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<LocationTestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::TooFewSamples { test: "mann-whitney-u", n: 0, min: 1 });
    }
    ensure_finite(a)?;
    ensure_finite(b)?;
    let n1 = a.len();
    let n2 = b.len();
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let u2 = (n1 * n2) as f64 - u1;
    let u = u1.min(u2);

    let n = n1 + n2;
    let mut sorted = pooled.clone();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite values"));
    let has_ties = sorted.windows(2).any(|w| w[0] == w[1]);

    let p = if n <= MW_EXACT_MAX_POOLED && !has_ties {
        exact_min_u_p(n1, n2, u)
    } else {
        // Tie correction: subtract sum(t^3 - t) over tie groups from the
        // variance; if everything ties into one group the variance is zero
        // and no rank ordering carries information.
        let mut tie_term = 0.0;
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let nf = n as f64;
        let var = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            let mu = (n1 * n2) as f64 / 2.0;
            let z = (u - mu + 0.5) / var.sqrt();
            (2.0 * normal_cdf(z)).min(1.0)
        }
    };
    Ok(LocationTestResult {
        test: LocationTestKind::MannWhitneyU,
        statistic: u,
        p_value: p,
        shapiro_p_a: None,
        shapiro_p_b: None,
    })
}

/// Exact two-sided Mann–Whitney p: the fraction of equally likely rank
/// assignments whose min(U1, U2) is at or below the observed one.
fn exact_min_u_p(n1: usize, n2: usize, u_obs: f64) -> f64 {
    let n = n1 + n2;
    debug_assert!(n <= MW_EXACT_MAX_POOLED);
    let mut le = 0u64;
    let mut total = 0u64;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        total += 1;
        let mut rank_sum = 0u32;
        for pos in 0..n {
            if mask & (1 << pos) != 0 {
                rank_sum += pos as u32 + 1;
            }
        }
        let u1 = f64::from(rank_sum) - (n1 * (n1 + 1)) as f64 / 2.0;
        let u2 = (n1 * n2) as f64 - u1;
        if u1.min(u2) <= u_obs {
            le += 1;
        }
    }
    le as f64 / total as f64
}

/// Shapiro screen at this level on both groups decides Welch vs Mann–Whitney.
pub const NORMALITY_ALPHA: f64 = 0.05;

/// Picks the location test: Welch's t when both groups pass a Shapiro–Wilk
/// normality screen at [`NORMALITY_ALPHA`], Mann–Whitney otherwise. Groups
/// too small to screen (n < 3) or with zero range fall back to Mann–Whitney;
/// groups below two values cannot support any location test.
pub fn choose_location_test(a: &[f64], b: &[f64]) -> Result<LocationTestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::NotComputable {
            reason: format!("group sizes {} and {} are below 2", a.len(), b.len()),
        });
    }
    ensure_finite(a)?;
    ensure_finite(b)?;
    let screen = |g: &[f64]| -> Option<f64> {
        shapiro::shapiro_wilk(g).ok().map(|r| r.p_value)
    };
    let (pa, pb) = (screen(a), screen(b));
    let both_normal = matches!((pa, pb), (Some(x), Some(y)) if x > NORMALITY_ALPHA && y > NORMALITY_ALPHA);
    let mut result = if both_normal { welch_t(a, b)? } else { mann_whitney_u(a, b)? };
    result.shapiro_p_a = pa;
    result.shapiro_p_b = pb;
    Ok(result)
}

/// Result of the two-group AUROC permutation test.
#[derive(Debug, Clone, Serialize)]
pub struct PermutationAucDiff {
    pub observed_diff: f64,
    pub p_value: f64,
    pub n_perm: usize,
}

/// Guards against permutation counts too small for a stable p-value.
pub const MIN_PERMUTATIONS: usize = 1000;

/// Permutation test for the difference in AUROC between two groups of
/// (score, label) pairs. Group membership is shuffled while group sizes are
/// kept; p = (#{|Δ_perm| ≥ |Δ_obs|} + 1) / (n_perm + 1).
///
/// Permutations that make a group single-class have no defined AUROC; they
/// count as exceedances, which biases p upward (conservative) rather than
/// silently dropping them.
pub fn permutation_auc_diff(
    a: &[(f64, Label)],
    b: &[(f64, Label)],
    n_perm: usize,
    seed: u64,
) -> Result<PermutationAucDiff, StatsError> {
    if n_perm < MIN_PERMUTATIONS {
        return Err(StatsError::TooFewPermutations { n_perm, min: MIN_PERMUTATIONS });
    }
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::TooFewSamples { test: "permutation-auc", n: 0, min: 1 });
    }
    let auc = |g: &[(f64, Label)]| -> Option<f64> {
        let scores: Vec<f64> = g.iter().map(|(s, _)| *s).collect();
        let labels: Vec<Label> = g.iter().map(|(_, l)| *l).collect();
        crate::evaluation::metrics::auroc(&scores, &labels)
    };
    let observed = match (auc(a), auc(b)) {
        (Some(x), Some(y)) => (x - y).abs(),
        _ => {
            return Err(StatsError::NotComputable {
                reason: "a group has a single class, so its AUROC is undefined".into(),
            })
        }
    };
    let mut pooled: Vec<(f64, Label)> = a.iter().chain(b.iter()).copied().collect();
    let mut rng = rng::seeded(seed);
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        rng::shuffle(&mut rng, &mut pooled);
        let (pa, pb) = pooled.split_at(a.len());
        match (auc(pa), auc(pb)) {
            (Some(x), Some(y)) => {
                if (x - y).abs() >= observed {
                    exceed += 1;
                }
            }
            _ => exceed += 1,
        }
    }
    Ok(PermutationAucDiff {
        observed_diff: observed,
        p_value: (exceed + 1) as f64 / (n_perm + 1) as f64,
        n_perm,
    })
}
