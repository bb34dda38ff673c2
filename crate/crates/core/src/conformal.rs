//! Split-conformal calibration for binary findings.
//!
//! One threshold per scope: the k-th smallest calibration nonconformity
//! score, with k = ceil((n+1)(1−α)). Scoring a test case keeps every label
//! whose nonconformity is at or below the threshold, which yields one of four
//! prediction sets over {0, 1}. Marginal coverage of the resulting sets is
//! guaranteed to sit in [1−α, 1−α+1/(n+1)] under exchangeability, and that
//! interval is what the synthetic harness checks empirically.
//!
//! Conventions fixed here (they change results, so they are spelled out):
//! ties at the threshold are included (≤, not <); when k exceeds n the
//! threshold is the +∞ sentinel and every set is {0, 1}; the sentinel
//! serializes as the string `"inf"` in threshold files.

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::data::{Alpha, Label};
use crate::rng::PrngId;
use crate::scalar::Real;
use crate::transforms::MinMaxFit;

#[derive(Debug, Error, PartialEq)]
pub enum ConformalError {
    #[error("nonconformity score {value} outside [0, 1]")]
    ScoreOutOfRange { value: f64 },
    #[error("probability {value} outside [0, 1]")]
    ProbabilityOutOfRange { value: f64 },
    #[error("value is not finite")]
    NonFinite,
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("coverage input is empty")]
    EmptyCoverage,
    #[error("length mismatch: {sets} prediction sets vs {labels} labels")]
    LengthMismatch { sets: usize, labels: usize },
    #[error("threshold file parse error: {0}")]
    ThresholdFile(String),
}

/// Nonconformity of a (probability, candidate label) pair: 1−p for label 1,
/// p for label 0. Low means conforming.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NonconformityScore<F>(F);

impl<F: Real> NonconformityScore<F> {
    pub fn new(value: F) -> Result<Self, ConformalError> {
        if !value.is_finite() {
            return Err(ConformalError::NonFinite);
        }
        if value < F::zero() || value > F::one() {
            return Err(ConformalError::ScoreOutOfRange { value: value.to_f64().unwrap_or(f64::NAN) });
        }
        Ok(Self(value))
    }

    pub fn value(self) -> F {
        self.0
    }
}

/// NCS of a candidate label under score p.
pub fn ncs<F: Real>(p: F, candidate: Label) -> Result<NonconformityScore<F>, ConformalError> {
    if !p.is_finite() {
        return Err(ConformalError::NonFinite);
    }
    if p < F::zero() || p > F::one() {
        return Err(ConformalError::ProbabilityOutOfRange { value: p.to_f64().unwrap_or(f64::NAN) });
    }
    let v = match candidate {
        Label::Pos => F::one() - p,
        Label::Neg => p,
    };
    Ok(NonconformityScore(v))
}

/// Calibrated threshold value: a finite NCS or the +∞ sentinel that arises
/// when the requested rank exceeds the calibration size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau<F> {
    Finite(F),
    Infinite,
}

impl<F: Real> Tau<F> {
    /// Whether a score is admitted into the prediction set (inclusive).
    pub fn admits(&self, score: F) -> bool {
        match self {
            Tau::Infinite => true,
            Tau::Finite(t) => score <= *t,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Tau::Finite(_))
    }

    pub fn finite_value(&self) -> Option<F> {
        match self {
            Tau::Finite(t) => Some(*t),
            Tau::Infinite => None,
        }
    }

    /// Total order with the sentinel on top.
    pub fn ge(&self, other: &Tau<F>) -> bool {
        match (self, other) {
            (Tau::Infinite, _) => true,
            (Tau::Finite(_), Tau::Infinite) => false,
            (Tau::Finite(a), Tau::Finite(b)) => a >= b,
        }
    }
}

impl<F: Real> Serialize for Tau<F> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Tau::Finite(t) => s.serialize_f64(t.to_f64().expect("finite tau")),
            Tau::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de, F: Real> Deserialize<'de> for Tau<F> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct TauVisitor<F>(std::marker::PhantomData<F>);
        impl<'de, F: Real> Visitor<'de> for TauVisitor<F> {
            type Value = Tau<F>;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number in [0, 1] or the string \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Tau<F>, E> {
                if !v.is_finite() {
                    return Err(E::custom("tau must be finite or the string \"inf\""));
                }
                F::from_f64(v)
                    .map(Tau::Finite)
                    .ok_or_else(|| E::custom("tau does not fit the scalar type"))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Tau<F>, E> {
                self.visit_f64(v as f64)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Tau<F>, E> {
                self.visit_f64(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Tau<F>, E> {
                if v == "inf" {
                    Ok(Tau::Infinite)
                } else {
                    Err(E::custom(format!("unexpected tau string {v:?}")))
                }
            }
        }
        d.deserialize_any(TauVisitor(std::marker::PhantomData))
    }
}

/// Threshold calibrated for one scope (a finding, or the report-alignment
/// global scope) at one significance level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedThreshold<F: Real> {
    pub scope: String,
    pub alpha: Alpha,
    pub tau: Tau<F>,
    pub n_cal: usize,
    pub rank_k: usize,
}

/// k = ceil((n_cal + 1) × (1 − alpha)).
///
/// The product is evaluated in floats, so when it sits exactly on an
/// integer (125 × 0.144 = 18, say) rounding can land it a few ulps to
/// either side and a bare ceiling would overshoot the rank by one.
/// Products within 1e-9 of an integer are snapped to it first: genuine
/// boundaries for any alpha with a few decimal digits are at least 1e-3
/// away from the next integer, while the accumulated float error stays
/// below 1e-10 for every supported calibration size.
pub fn conformal_rank(n_cal: usize, alpha: Alpha) -> usize {
    let x = ((n_cal + 1) as f64) * (1.0 - alpha.value());
    let nearest = x.round();
    let k = if (x - nearest).abs() < 1e-9 { nearest } else { x.ceil() };
    (k as usize).max(1)
}

/// Sorts the calibration scores ascending and takes the k-th smallest;
/// k > n means no finite score is conservative enough and the sentinel wins.
pub fn calibrate_threshold<F: Real>(
    cal_scores: &[NonconformityScore<F>],
    alpha: Alpha,
    scope: impl Into<String>,
) -> Result<CalibratedThreshold<F>, ConformalError> {
    if cal_scores.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    let n = cal_scores.len();
    let k = conformal_rank(n, alpha);
    let tau = if k > n {
        Tau::Infinite
    } else {
        let mut values: Vec<F> = cal_scores.iter().map(|s| s.value()).collect();
        // Scores are validated finite, so total ordering is safe.
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        Tau::Finite(values[k - 1])
    };
    Ok(CalibratedThreshold { scope: scope.into(), alpha, tau, n_cal: n, rank_k: k })
}

/// Subset of {0, 1} admitted by the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredictionSet {
    Empty,
    NegOnly,
    PosOnly,
    Both,
}

impl PredictionSet {
    pub fn contains(self, label: Label) -> bool {
        match (self, label) {
            (PredictionSet::Both, _) => true,
            (PredictionSet::PosOnly, Label::Pos) => true,
            (PredictionSet::NegOnly, Label::Neg) => true,
            _ => false,
        }
    }

    pub fn is_singleton(self) -> bool {
        matches!(self, PredictionSet::PosOnly | PredictionSet::NegOnly)
    }
}

/// Evaluates both candidate labels against the threshold (inclusive ties).
pub fn prediction_set<F: Real>(
    p: F,
    threshold: &CalibratedThreshold<F>,
) -> Result<PredictionSet, ConformalError> {
    let ncs_pos = ncs(p, Label::Pos)?;
    let ncs_neg = ncs(p, Label::Neg)?;
    let has_pos = threshold.tau.admits(ncs_pos.value());
    let has_neg = threshold.tau.admits(ncs_neg.value());
    Ok(match (has_neg, has_pos) {
        (true, true) => PredictionSet::Both,
        (true, false) => PredictionSet::NegOnly,
        (false, true) => PredictionSet::PosOnly,
        (false, false) => PredictionSet::Empty,
    })
}

/// Certainty taxonomy when both labels are actionable: singletons are
/// certain; an empty or two-element set tells you nothing usable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelCertainty {
    Certain,
    Uncertain,
}

/// Certainty taxonomy for report alignment, where only the positive class
/// means "adequately aligned": {1} is certain, {0, 1} undecided, and both
/// {0} and the empty set land in highly-uncertain (the empty set because it
/// rejects even the positive hypothesis; callers can still count it
/// separately via the set-state counts carried in reports).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportCertainty {
    Certain,
    Uncertain,
    HighlyUncertain,
}

pub fn classify_label_mode(set: PredictionSet) -> LabelCertainty {
    if set.is_singleton() {
        LabelCertainty::Certain
    } else {
        LabelCertainty::Uncertain
    }
}

pub fn classify_report_mode(set: PredictionSet) -> ReportCertainty {
    match set {
        PredictionSet::PosOnly => ReportCertainty::Certain,
        PredictionSet::Both => ReportCertainty::Uncertain,
        PredictionSet::NegOnly | PredictionSet::Empty => ReportCertainty::HighlyUncertain,
    }
}

/// Fraction of cases whose true label is inside the emitted set.
pub fn coverage(sets: &[PredictionSet], gts: &[Label]) -> Result<f64, ConformalError> {
    if sets.len() != gts.len() {
        return Err(ConformalError::LengthMismatch { sets: sets.len(), labels: gts.len() });
    }
    if sets.is_empty() {
        return Err(ConformalError::EmptyCoverage);
    }
    let hits = sets.iter().zip(gts).filter(|(s, gt)| s.contains(**gt)).count();
    Ok(hits as f64 / sets.len() as f64)
}

/// Report-mode coverage: fraction of sets containing the positive class,
/// which is the only ground truth report mode has.
pub fn report_coverage(sets: &[PredictionSet]) -> Result<f64, ConformalError> {
    if sets.is_empty() {
        return Err(ConformalError::EmptyCoverage);
    }
    let hits = sets.iter().filter(|s| s.contains(Label::Pos)).count();
    Ok(hits as f64 / sets.len() as f64)
}

// --- threshold files --------------------------------------------------------

/// One entry of the threshold file. Self-describing: carries the PRNG
/// identity and schema version so a threshold can be re-applied later without
/// the run that made it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub scope: String,
    pub alpha: Alpha,
    pub tau: Tau<f64>,
    pub n_cal: usize,
    pub rank_k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_max: Option<MinMaxFit<f64>>,
    pub prng: PrngId,
    pub format_version: u32,
}

impl ThresholdRecord {
    pub fn new(
        threshold: &CalibratedThreshold<f64>,
        min_max: Option<MinMaxFit<f64>>,
        prng: PrngId,
    ) -> Self {
        Self {
            scope: threshold.scope.clone(),
            alpha: threshold.alpha,
            tau: threshold.tau,
            n_cal: threshold.n_cal,
            rank_k: threshold.rank_k,
            min_max,
            prng,
            format_version: crate::FORMAT_VERSION,
        }
    }

    pub fn threshold(&self) -> CalibratedThreshold<f64> {
        CalibratedThreshold {
            scope: self.scope.clone(),
            alpha: self.alpha,
            tau: self.tau,
            n_cal: self.n_cal,
            rank_k: self.rank_k,
        }
    }
}

/// Serializes threshold records as a pretty-printed JSON array with a
/// trailing newline. The format round-trips bit-exactly through
/// [`parse_threshold_file`].
pub fn write_threshold_file(records: &[ThresholdRecord]) -> String {
    let mut out = serde_json::to_string_pretty(records).expect("threshold serialization");
    out.push('\n');
    out
}

pub fn parse_threshold_file(input: &str) -> Result<Vec<ThresholdRecord>, ConformalError> {
    let records: Vec<ThresholdRecord> =
        serde_json::from_str(input).map_err(|e| ConformalError::ThresholdFile(e.to_string()))?;
    for r in &records {
        if r.n_cal == 0 || r.rank_k == 0 {
            return Err(ConformalError::ThresholdFile(format!(
                "scope {:?}: n_cal and rank_k must be positive",
                r.scope
            )));
        }
        if let Tau::Finite(t) = r.tau {
            if !(0.0..=1.0).contains(&t) {
                return Err(ConformalError::ThresholdFile(format!(
                    "scope {:?}: tau {t} outside [0, 1]",
                    r.scope
                )));
            }
        }
        if let Some(mm) = &r.min_max {
            if !(mm.min_val < mm.max_val) {
                return Err(ConformalError::ThresholdFile(format!(
                    "scope {:?}: min_max range is degenerate",
                    r.scope
                )));
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PrngId;

    fn scores(vals: &[f64]) -> Vec<NonconformityScore<f64>> {
        vals.iter().map(|&v| NonconformityScore::new(v).unwrap()).collect()
    }

    fn alpha(v: f64) -> Alpha {
        Alpha::new(v).unwrap()
    }

    #[test]
    fn ncs_is_one_minus_p_for_pos_and_p_for_neg() {
        assert_eq!(ncs(0.8, Label::Pos).unwrap().value(), 1.0 - 0.8);
        assert_eq!(ncs(0.8, Label::Neg).unwrap().value(), 0.8);
        assert!(ncs(1.2, Label::Pos).is_err());
        assert!(ncs(f64::NAN, Label::Pos).is_err());
    }

    #[test]
    fn nine_scores_alpha_01_takes_the_ninth() {
        let cal = scores(&[0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.80]);
        let t = calibrate_threshold(&cal, alpha(0.1), "f").unwrap();
        assert_eq!(t.rank_k, 9);
        assert_eq!(t.n_cal, 9);
        assert_eq!(t.tau, Tau::Finite(0.80));
    }

    #[test]
    fn rank_exceeding_n_gives_sentinel() {
        let cal = scores(&[0.1, 0.2, 0.3]);
        let t = calibrate_threshold(&cal, alpha(0.05), "f").unwrap();
        assert_eq!(t.rank_k, 4);
        assert_eq!(t.tau, Tau::Infinite);
    }

    #[test]
    fn tied_calibration_scores() {
        let cal = scores(&[0.5; 19]);
        let t = calibrate_threshold(&cal, alpha(0.2), "f").unwrap();
        assert_eq!(t.rank_k, 16);
        assert_eq!(t.tau, Tau::Finite(0.5));
    }

    #[test]
    fn rank_formula_on_common_grid() {
        // Exercises alphas whose float representation sits on either side of
        // the decimal value; the rank must match exact decimal arithmetic.
        assert_eq!(conformal_rank(9, alpha(0.1)), 9);
        assert_eq!(conformal_rank(9, alpha(0.3)), 7);
        assert_eq!(conformal_rank(19, alpha(0.2)), 16);
        assert_eq!(conformal_rank(3, alpha(0.05)), 4);
        assert_eq!(conformal_rank(300, alpha(0.1)), 271);
        assert_eq!(conformal_rank(300, alpha(0.05)), 286);
        assert_eq!(conformal_rank(300, alpha(0.2)), 241);
        assert_eq!(conformal_rank(24, alpha(0.05)), 24);
    }

    fn thr(tau: f64) -> CalibratedThreshold<f64> {
        CalibratedThreshold {
            scope: "f".into(),
            alpha: alpha(0.1),
            tau: Tau::Finite(tau),
            n_cal: 9,
            rank_k: 9,
        }
    }

    #[test]
    fn prediction_set_examples() {
        assert_eq!(prediction_set(0.9, &thr(0.2)).unwrap(), PredictionSet::PosOnly);
        assert_eq!(prediction_set(0.5, &thr(0.6)).unwrap(), PredictionSet::Both);
        assert_eq!(prediction_set(0.5, &thr(0.4)).unwrap(), PredictionSet::Empty);
        assert_eq!(prediction_set(0.1, &thr(0.2)).unwrap(), PredictionSet::NegOnly);
    }

    #[test]
    fn threshold_ties_are_inclusive() {
        // 1 − 0.75 = 0.25 lands exactly on tau and must be admitted.
        assert_eq!(prediction_set(0.75, &thr(0.25)).unwrap(), PredictionSet::PosOnly);
    }

    #[test]
    fn infinite_tau_admits_both() {
        let mut t = thr(0.0);
        t.tau = Tau::Infinite;
        assert_eq!(prediction_set(0.0, &t).unwrap(), PredictionSet::Both);
        assert_eq!(prediction_set(1.0, &t).unwrap(), PredictionSet::Both);
    }

    #[test]
    fn membership_matches_inequalities() {
        // 1 ∈ set ⇔ p ≥ 1 − τ and 0 ∈ set ⇔ p ≤ τ. A dyadic τ keeps the
        // two routes bit-identical: 1 − p is exact for p ≥ 0.5 and far from
        // the boundary below it.
        let t = thr(0.25);
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            let set = prediction_set(p, &t).unwrap();
            assert_eq!(set.contains(Label::Pos), p >= 0.75, "p = {p}");
            assert_eq!(set.contains(Label::Neg), p <= 0.25, "p = {p}");
        }
    }

    #[test]
    fn coverage_examples() {
        let sets = [
            PredictionSet::Empty,
            PredictionSet::PosOnly,
            PredictionSet::Both,
            PredictionSet::NegOnly,
        ];
        let gts = [Label::Pos, Label::Pos, Label::Pos, Label::Neg];
        assert_eq!(coverage(&sets, &gts).unwrap(), 0.75);

        let sets = [PredictionSet::PosOnly, PredictionSet::Both, PredictionSet::NegOnly];
        assert_eq!(report_coverage(&sets).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn certainty_taxonomies() {
        assert_eq!(classify_label_mode(PredictionSet::PosOnly), LabelCertainty::Certain);
        assert_eq!(classify_label_mode(PredictionSet::NegOnly), LabelCertainty::Certain);
        assert_eq!(classify_label_mode(PredictionSet::Both), LabelCertainty::Uncertain);
        assert_eq!(classify_label_mode(PredictionSet::Empty), LabelCertainty::Uncertain);

        assert_eq!(classify_report_mode(PredictionSet::PosOnly), ReportCertainty::Certain);
        assert_eq!(classify_report_mode(PredictionSet::Both), ReportCertainty::Uncertain);
        assert_eq!(classify_report_mode(PredictionSet::NegOnly), ReportCertainty::HighlyUncertain);
        assert_eq!(classify_report_mode(PredictionSet::Empty), ReportCertainty::HighlyUncertain);
    }

    #[test]
    fn threshold_file_roundtrips_bit_exactly() {
        let prng = PrngId { algorithm: crate::rng::PRNG_ALGORITHM.to_string(), seed: 42 };
        let records = vec![
            ThresholdRecord {
                scope: "effusion".into(),
                alpha: alpha(0.1),
                tau: Tau::Finite(0.8312),
                n_cal: 18,
                rank_k: 18,
                min_max: None,
                prng: prng.clone(),
                format_version: crate::FORMAT_VERSION,
            },
            ThresholdRecord {
                scope: "report-alignment".into(),
                alpha: alpha(0.05),
                tau: Tau::Infinite,
                n_cal: 3,
                rank_k: 4,
                min_max: Some(MinMaxFit { min_val: -0.5, max_val: 0.5 }),
                prng,
                format_version: crate::FORMAT_VERSION,
            },
        ];
        let text = write_threshold_file(&records);
        let parsed = parse_threshold_file(&text).unwrap();
        assert_eq!(parsed, records);
        assert_eq!(write_threshold_file(&parsed), text);
        assert!(text.contains("\"inf\""));
    }

    #[test]
    fn threshold_file_rejects_bad_tau() {
        let text = r#"[{"scope":"f","alpha":0.1,"tau":1.5,"n_cal":9,"rank_k":9,
            "prng":{"algorithm":"a","seed":1},"format_version":1}]"#;
        assert!(parse_threshold_file(text).is_err());
    }

    #[test]
    fn f32_calibration_works() {
        // k = ceil(4 · 0.75) = 3 on three scores.
        let cal: Vec<NonconformityScore<f32>> =
            [0.1f32, 0.2, 0.3].iter().map(|&v| NonconformityScore::new(v).unwrap()).collect();
        let t = calibrate_threshold(&cal, alpha(0.25), "f").unwrap();
        assert_eq!(t.tau, Tau::Finite(0.3f32));
        assert_eq!(t.rank_k, 3);
    }
}
