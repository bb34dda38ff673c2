//! Score transforms that turn raw scorer outputs into probabilities in [0, 1].
//!
//! Three input shapes are supported: paired yes/no masses, similarity
//! differences squashed through a logistic, and raw similarity scores mapped
//! through a min–max fit. The min–max parameters are fitted on calibration
//! data only and clamp at apply time, so test scores outside the fitted range
//! stay inside [0, 1].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("yes/no masses are both zero; normalized probability is undefined")]
    UndefinedMass,
    #[error("input {value} is negative; raw masses must be nonnegative")]
    NegativeMass { value: f64 },
    #[error("input {value} is outside [-1, 1]; cosine similarities expected")]
    SimilarityOutOfRange { value: f64 },
    #[error("input is not a finite number")]
    NonFinite,
    #[error("cannot fit min-max on an empty set")]
    EmptyFit,
    #[error("degenerate range: all {n} values equal {value}; min-max fit undefined")]
    DegenerateRange { value: f64, n: usize },
}

fn to_f64<F: Real>(v: F) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// p = yes / (yes + no).
///
/// Errors when either mass is negative or both are zero.
pub fn normalize_yes_no<F: Real>(p_yes_raw: F, p_no_raw: F) -> Result<F, TransformError> {
    if !p_yes_raw.is_finite() || !p_no_raw.is_finite() {
        return Err(TransformError::NonFinite);
    }
    for v in [p_yes_raw, p_no_raw] {
        if v < F::zero() {
            return Err(TransformError::NegativeMass { value: to_f64(v) });
        }
    }
    let total = p_yes_raw + p_no_raw;
    if total == F::zero() {
        return Err(TransformError::UndefinedMass);
    }
    Ok(p_yes_raw / total)
}

/// Numerically stable logistic; never overflows `exp`.
pub fn logistic<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// p = logistic(c_with − c_without), for cosine similarities in [−1, 1].
pub fn sigmoid_similarity_diff<F: Real>(c_with: F, c_without: F) -> Result<F, TransformError> {
    for v in [c_with, c_without] {
        if !v.is_finite() {
            return Err(TransformError::NonFinite);
        }
        if v < -F::one() || v > F::one() {
            return Err(TransformError::SimilarityOutOfRange { value: to_f64(v) });
        }
    }
    Ok(logistic(c_with - c_without))
}

/// Min–max parameters fitted on calibration scores.
///
/// Serialized alongside thresholds so report-mode inference is reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxFit<F> {
    pub min_val: F,
    pub max_val: F,
}

impl<F: Real> MinMaxFit<F> {
    /// Invariant: `min_val < max_val` strictly; a constant score list has no
    /// usable range and is rejected.
    pub fn fit(calibration_scores: &[F]) -> Result<Self, TransformError> {
        let first = *calibration_scores.first().ok_or(TransformError::EmptyFit)?;
        if !first.is_finite() {
            return Err(TransformError::NonFinite);
        }
        let mut min_val = first;
        let mut max_val = first;
        for &v in &calibration_scores[1..] {
            if !v.is_finite() {
                return Err(TransformError::NonFinite);
            }
            min_val = min_val.min(v);
            max_val = max_val.max(v);
        }
        if min_val == max_val {
            return Err(TransformError::DegenerateRange {
                value: to_f64(min_val),
                n: calibration_scores.len(),
            });
        }
        Ok(Self { min_val, max_val })
    }

    /// clamp((raw − min) / (max − min), 0, 1).
    ///
    /// Calibration values map into [0, 1] without touching the clamp; test
    /// values outside the fitted range are clamped to the boundary.
    pub fn apply(&self, raw: F) -> F {
        let scaled = (raw - self.min_val) / (self.max_val - self.min_val);
        scaled.max(F::zero()).min(F::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_yes_no(0.8, 0.2), Ok(0.8 / (0.8 + 0.2)));
        assert_eq!(normalize_yes_no(0.3, 0.3), Ok(0.5));
        assert_eq!(normalize_yes_no(0.9, 0.0), Ok(1.0));
        assert_eq!(normalize_yes_no(0.0, 0.0), Err(TransformError::UndefinedMass));
        assert!(matches!(
            normalize_yes_no(-0.1, 0.5),
            Err(TransformError::NegativeMass { .. })
        ));
    }

    #[test]
    fn sigmoid_diff_examples() {
        // ln 3 difference: logistic(ln 3) = 3/4 exactly in the reals.
        let ln3 = 3f64.ln();
        let p = sigmoid_similarity_diff(ln3 / 2.0, -ln3 / 2.0).unwrap();
        assert!((p - 0.75).abs() < 1e-12);
        // Extended-precision reference for logistic(2).
        let p2 = logistic(2.0f64);
        assert!((p2 - 0.880_797_077_977_882_4).abs() < 1e-12);
        assert!(matches!(
            sigmoid_similarity_diff(1.2, 0.0),
            Err(TransformError::SimilarityOutOfRange { .. })
        ));
    }

    #[test]
    fn logistic_is_stable_at_extremes() {
        assert_eq!(logistic(-1000.0f64), 0.0);
        assert_eq!(logistic(1000.0f64), 1.0);
        assert!((logistic(0.0f64) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fit_examples() {
        let fit = MinMaxFit::fit(&[0.2, 0.6, 0.4]).unwrap();
        assert_eq!(fit.min_val, 0.2);
        assert_eq!(fit.max_val, 0.6);
        assert!(matches!(
            MinMaxFit::fit(&[0.5, 0.5, 0.5]),
            Err(TransformError::DegenerateRange { .. })
        ));
        assert_eq!(MinMaxFit::<f64>::fit(&[]), Err(TransformError::EmptyFit));
    }

    #[test]
    fn apply_clamps_outside_fitted_range() {
        let fit = MinMaxFit { min_val: 2.0, max_val: 6.0 };
        assert_eq!(fit.apply(4.0), 0.5);
        assert_eq!(fit.apply(8.0), 1.0);
        assert_eq!(fit.apply(2.0), 0.0);
        assert_eq!(fit.apply(0.0), 0.0);
    }

    #[test]
    fn kernels_accept_f32() {
        let p: f32 = normalize_yes_no(0.8f32, 0.2f32).unwrap();
        assert!((p - 0.8).abs() < 1e-6);
        // Dyadic endpoints so the rescale is exact in f32.
        let fit = MinMaxFit::fit(&[0.25f32, 0.75, 0.5]).unwrap();
        assert_eq!(fit.apply(0.5), 0.5);
    }
}
