//! Binary classification metrics under the fixed p ≥ 0.5 decision rule.
//!
//! Every metric that can be undefined on a given input (single-class data,
//! no predicted positives) comes back as `None` and serializes as JSON null;
//! downstream tables print those cells as "-" instead of inventing a zero.

use serde::Serialize;
use thiserror::Error;

use crate::data::Label;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metrics input is empty")]
    Empty,
    #[error("length mismatch: {scores} scores vs {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {value} outside [0, 1]")]
    OutOfRange { value: f64 },
    #[error("score is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryMetrics {
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub n: usize,
    pub n_pos: usize,
}

/// Midranks over a generic scalar slice (1-based, ties averaged). Rank
/// values are small integers and halves, exactly representable in f64.
fn midranks_of<F: Real>(values: &[F]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite scores"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// AUROC as the tie-corrected rank statistic: the probability that a random
/// positive outscores a random negative, ties counted half. `None` when
/// either class is absent. Panics on length mismatch; validated callers only.
pub fn auroc<F: Real>(scores: &[F], labels: &[Label]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|l| **l == Label::Pos).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = midranks_of(scores);
    let r_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == Label::Pos)
        .map(|(r, _)| *r)
        .sum();
    Some((r_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64)
}

/// Average precision: mean over positives of precision at each positive's
/// position in the descending-score ordering (step-wise, no interpolation).
/// Ties are broken by stable input order, which is part of the contract
/// because inequivalent AP estimators exist. `None` when a class is absent.
pub fn average_precision<F: Real>(scores: &[F], labels: &[Label]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|l| **l == Label::Pos).count();
    if n_pos == 0 || n_pos == labels.len() {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort: equal scores keep input order.
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut cum_pos = 0usize;
    let mut ap_sum = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        if labels[idx] == Label::Pos {
            cum_pos += 1;
            ap_sum += cum_pos as f64 / (k + 1) as f64;
        }
    }
    Some(ap_sum / n_pos as f64)
}

pub fn binary_metrics<F: Real>(
    scores: &[F],
    gts: &[Label],
) -> Result<BinaryMetrics, MetricsError> {
    if scores.len() != gts.len() {
        return Err(MetricsError::LengthMismatch { scores: scores.len(), labels: gts.len() });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    for &s in scores {
        if !s.is_finite() {
            return Err(MetricsError::NonFinite);
        }
        if s < F::zero() || s > F::one() {
            return Err(MetricsError::OutOfRange { value: s.to_f64().unwrap_or(f64::NAN) });
        }
    }
    let half = F::from_f64(0.5).expect("0.5 representable");
    let mut tp = 0usize;
    let mut tn = 0usize;
    let mut fp = 0usize;
    let mut fnn = 0usize;
    for (&s, &gt) in scores.iter().zip(gts) {
        let pred_pos = s >= half;
        match (pred_pos, gt) {
            (true, Label::Pos) => tp += 1,
            (true, Label::Neg) => fp += 1,
            (false, Label::Pos) => fnn += 1,
            (false, Label::Neg) => tn += 1,
        }
    }
    let n = scores.len();
    let n_pos = tp + fnn;
    let n_neg = n - n_pos;
    let f1_denom = 2 * tp + fp + fnn;
    Ok(BinaryMetrics {
        accuracy: Some((tp + tn) as f64 / n as f64),
        f1: (f1_denom > 0).then(|| 2.0 * tp as f64 / f1_denom as f64),
        auroc: auroc(scores, gts),
        auprc: average_precision(scores, gts),
        sensitivity: (n_pos > 0).then(|| tp as f64 / n_pos as f64),
        specificity: (n_neg > 0).then(|| tn as f64 / n_neg as f64),
        n,
        n_pos,
    })
}
