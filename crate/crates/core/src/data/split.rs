//! Seeded global calibration/test split.

use std::collections::{HashMap, HashSet};

use crate::rng;

use super::{DataError, SplitAssignment, SplitRole};

/// Assigns every case to exactly one role: a seeded Fisher–Yates shuffle of
/// the id list, with the first `round(n × fraction)` (half-up) cases becoming
/// calibration.
///
/// One split is shared by all findings of a dataset; per-finding splitting
/// would break the single-image-many-labels assumption downstream.
pub fn split_cases(
    case_ids: &[String],
    fraction: f64,
    seed: u64,
) -> Result<SplitAssignment, DataError> {
    if case_ids.is_empty() {
        return Err(DataError::Empty);
    }
    if !fraction.is_finite() || fraction <= 0.0 || fraction >= 1.0 {
        return Err(DataError::BadFraction { value: fraction });
    }
    let mut seen = HashSet::with_capacity(case_ids.len());
    for id in case_ids {
        if !seen.insert(id.as_str()) {
            return Err(DataError::DuplicateSplitId { case_id: id.clone() });
        }
    }

    let n = case_ids.len();
    // Round half-up: floor(n·f + 0.5). Documented tie rule for sizes like 5 × 0.3.
    let n_cal = (n as f64 * fraction + 0.5).floor() as usize;
    let n_cal = n_cal.min(n);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::seeded(seed);
    rng::shuffle(&mut rng, &mut order);

    let mut roles: HashMap<String, SplitRole> = HashMap::with_capacity(n);
    for (pos, &idx) in order.iter().enumerate() {
        let role = if pos < n_cal { SplitRole::Calibration } else { SplitRole::Test };
        roles.insert(case_ids[idx].clone(), role);
    }

    Ok(SplitAssignment::from_parts(seed, fraction, case_ids.to_vec(), roles))
}
