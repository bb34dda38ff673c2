//! Assembly of per-(finding, α) stratified reports and the per-α report-mode
//! summaries: the machine-readable bodies of the two report files.
//!
//! Policy for cells that cannot be computed (empty stratum, single-class
//! stratum, too few samples for a test): the cell is `None`, the run keeps
//! going. Structural problems (no calibration rows, missing ground truth in
//! classify mode, a degenerate min–max fit) are hard errors instead, because
//! no meaningful report exists without them.

use serde::Serialize;
use thiserror::Error;

use crate::conformal::{
    self, classify_label_mode, classify_report_mode, CalibratedThreshold, ConformalError,
    LabelCertainty, NonconformityScore, ReportCertainty, Tau,
};
use crate::data::{Alpha, AlignmentRecord, Label, LabeledScore, SplitAssignment, SplitRole};
use crate::evaluation::metrics::{binary_metrics, BinaryMetrics, MetricsError};
use crate::rng;
use crate::stats::{
    choose_location_test, correlation_t_test, pearson, permutation_auc_diff, spearman,
    LocationTestResult, PermutationAucDiff, StatsError, MIN_PERMUTATIONS,
};
use crate::transforms::{MinMaxFit, TransformError};

/// Threshold scope used for the single global report-alignment threshold.
pub const REPORT_SCOPE: &str = "report-alignment";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("alpha list is empty")]
    NoAlphas,
    #[error("alpha list must be strictly increasing")]
    AlphasNotIncreasing,
    #[error("case {case_id} (finding {finding}) has no gt, which classify mode requires")]
    MissingGroundTruth { finding: String, case_id: String },
    #[error("no calibration rows for {scope}")]
    EmptyCalibration { scope: String },
    #[error("no test rows for {scope}")]
    EmptyTest { scope: String },
    #[error("case {case_id} is not in the split assignment")]
    MissingSplitRole { case_id: String },
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn validate_alphas(alphas: &[Alpha]) -> Result<(), ReportError> {
    if alphas.is_empty() {
        return Err(ReportError::NoAlphas);
    }
    if alphas.windows(2).any(|w| w[1].value() <= w[0].value()) {
        return Err(ReportError::AlphasNotIncreasing);
    }
    Ok(())
}

/// One finding at one α: certainty split of the test cases plus stratum
/// metrics. `uncertain_ratio` is computed as 1 − certain_ratio so the two
/// always sum to exactly 1.
#[derive(Debug, Clone, Serialize)]
pub struct StratifiedReport {
    pub certain_ratio: f64,
    pub uncertain_ratio: f64,
    pub n_test: usize,
    pub n_certain: usize,
    pub n_empty_sets: usize,
    pub coverage: f64,
    pub metrics_certain: Option<BinaryMetrics>,
    pub metrics_uncertain: Option<BinaryMetrics>,
    pub auc_diff_p_value: Option<f64>,
    pub auc_diff: Option<PermutationAucDiff>,
}

/// A stratified report bound to its (finding, α) cell and the threshold that
/// produced it.
#[derive(Debug, Clone, Serialize)]
pub struct ClassifyCell {
    pub finding: String,
    pub alpha: Alpha,
    pub threshold: CalibratedThreshold<f64>,
    pub report: StratifiedReport,
}

/// Cross-finding correlation between certain-stratum and uncertain-stratum
/// AUROCs at one α. Needs at least three findings with both AUROCs defined;
/// otherwise the fields stay unset.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationBlock {
    pub alpha: Alpha,
    pub n_findings: usize,
    pub pearson_r: Option<f64>,
    pub pearson_p: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub spearman_p: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyOutput {
    pub cells: Vec<ClassifyCell>,
    pub correlations: Vec<CorrelationBlock>,
}

struct FindingRows<'a> {
    name: &'a str,
    cal: Vec<&'a LabeledScore>,
    test: Vec<&'a LabeledScore>,
}

fn group_by_finding<'a>(
    data: &'a [LabeledScore],
    split: &SplitAssignment,
) -> Result<Vec<FindingRows<'a>>, ReportError> {
    let mut groups: Vec<FindingRows<'a>> = Vec::new();
    for row in data {
        if row.gt.is_none() {
            return Err(ReportError::MissingGroundTruth {
                finding: row.finding.clone(),
                case_id: row.case_id.clone(),
            });
        }
        let role = split
            .role(&row.case_id)
            .ok_or_else(|| ReportError::MissingSplitRole { case_id: row.case_id.clone() })?;
        let group = match groups.iter_mut().find(|g| g.name == row.finding) {
            Some(g) => g,
            None => {
                groups.push(FindingRows { name: &row.finding, cal: Vec::new(), test: Vec::new() });
                groups.last_mut().expect("just pushed")
            }
        };
        match role {
            SplitRole::Calibration => group.cal.push(row),
            SplitRole::Test => group.test.push(row),
        }
    }
    Ok(groups)
}

/// Builds the full classify-mode report: per (finding, α) calibration on the
/// true-label NCS of the calibration rows, then certainty stratification of
/// the test rows. Permutation seeds are derived per cell from `master_seed`,
/// the finding name, and the α index, so neither finding order nor α order
/// affects any p-value.
pub fn classify_findings(
    data: &[LabeledScore],
    split: &SplitAssignment,
    alphas: &[Alpha],
    n_perm: usize,
    master_seed: u64,
) -> Result<ClassifyOutput, ReportError> {
    validate_alphas(alphas)?;
    if n_perm < MIN_PERMUTATIONS {
        return Err(StatsError::TooFewPermutations { n_perm, min: MIN_PERMUTATIONS }.into());
    }
    let groups = group_by_finding(data, split)?;
    let mut cells = Vec::new();
    for g in &groups {
        if g.cal.is_empty() {
            return Err(ReportError::EmptyCalibration { scope: g.name.to_string() });
        }
        if g.test.is_empty() {
            return Err(ReportError::EmptyTest { scope: g.name.to_string() });
        }
        let cal_ncs: Vec<NonconformityScore<f64>> = g
            .cal
            .iter()
            .map(|r| conformal::ncs(r.p_yes, r.gt.expect("checked in grouping")))
            .collect::<Result<_, _>>()?;
        for (alpha_idx, &alpha) in alphas.iter().enumerate() {
            let threshold = conformal::calibrate_threshold(&cal_ncs, alpha, g.name)?;
            let cell_seed =
                rng::derive_seed(master_seed ^ rng::fnv1a64(g.name), alpha_idx as u64);
            let report = stratify_one(&g.test, &threshold, n_perm, cell_seed)?;
            cells.push(ClassifyCell { finding: g.name.to_string(), alpha, threshold, report });
        }
    }
    let correlations = correlation_blocks(&cells, alphas);
    Ok(ClassifyOutput { cells, correlations })
}

fn stratify_one(
    test: &[&LabeledScore],
    threshold: &CalibratedThreshold<f64>,
    n_perm: usize,
    seed: u64,
) -> Result<StratifiedReport, ReportError> {
    let mut sets = Vec::with_capacity(test.len());
    let mut gts = Vec::with_capacity(test.len());
    let mut certain: Vec<(f64, Label)> = Vec::new();
    let mut uncertain: Vec<(f64, Label)> = Vec::new();
    for row in test {
        let gt = row.gt.expect("checked in grouping");
        let set = conformal::prediction_set(row.p_yes, threshold)?;
        sets.push(set);
        gts.push(gt);
        match classify_label_mode(set) {
            LabelCertainty::Certain => certain.push((row.p_yes, gt)),
            LabelCertainty::Uncertain => uncertain.push((row.p_yes, gt)),
        }
    }
    let n = test.len();
    let n_certain = certain.len();
    let certain_ratio = n_certain as f64 / n as f64;
    let coverage = conformal::coverage(&sets, &gts)?;
    let n_empty_sets = sets.iter().filter(|s| **s == conformal::PredictionSet::Empty).count();
    let stratum_metrics = |pairs: &[(f64, Label)]| -> Result<Option<BinaryMetrics>, ReportError> {
        if pairs.is_empty() {
            return Ok(None);
        }
        let scores: Vec<f64> = pairs.iter().map(|(s, _)| *s).collect();
        let labels: Vec<Label> = pairs.iter().map(|(_, l)| *l).collect();
        Ok(Some(binary_metrics(&scores, &labels)?))
    };
    let auc_diff = if certain.is_empty() || uncertain.is_empty() {
        None
    } else {
        permutation_auc_diff(&certain, &uncertain, n_perm, seed).ok()
    };
    Ok(StratifiedReport {
        certain_ratio,
        uncertain_ratio: 1.0 - certain_ratio,
        n_test: n,
        n_certain,
        n_empty_sets,
        coverage,
        metrics_certain: stratum_metrics(&certain)?,
        metrics_uncertain: stratum_metrics(&uncertain)?,
        auc_diff_p_value: auc_diff.as_ref().map(|d| d.p_value),
        auc_diff,
    })
}

/// Minimum findings with both stratum AUROCs defined before a correlation is
/// reported; below this the t-based p-value has no degrees of freedom.
const MIN_FINDINGS_FOR_CORRELATION: usize = 3;

fn correlation_blocks(cells: &[ClassifyCell], alphas: &[Alpha]) -> Vec<CorrelationBlock> {
    alphas
        .iter()
        .map(|&alpha| {
            let pairs: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.alpha == alpha)
                .filter_map(|c| {
                    let a = c.report.metrics_certain.as_ref()?.auroc?;
                    let b = c.report.metrics_uncertain.as_ref()?.auroc?;
                    Some((a, b))
                })
                .collect();
            let n = pairs.len();
            let mut block = CorrelationBlock {
                alpha,
                n_findings: n,
                pearson_r: None,
                pearson_p: None,
                spearman_rho: None,
                spearman_p: None,
            };
            if n >= MIN_FINDINGS_FOR_CORRELATION {
                let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
                if let Ok(r) = pearson(&xs, &ys) {
                    block.pearson_r = Some(r);
                    block.pearson_p = correlation_t_test(r, n).ok().map(|(_, p)| p);
                }
                if let Ok(rho) = spearman(&xs, &ys) {
                    block.spearman_rho = Some(rho);
                    block.spearman_p = correlation_t_test(rho, n).ok().map(|(_, p)| p);
                }
            }
            block
        })
        .collect()
}

/// One certainty stratum in report mode.
#[derive(Debug, Clone, Serialize)]
pub struct StratumSummary {
    pub n: usize,
    pub ratio: f64,
    /// Mean gt_report_cosine over stratum records that carry one.
    pub mean_gt_similarity: Option<f64>,
}

/// All three pairwise stratum comparisons; unset where a group has fewer
/// than two gt values.
#[derive(Debug, Clone, Serialize)]
pub struct PairwiseComparisons {
    pub certain_vs_uncertain: Option<LocationTestResult>,
    pub certain_vs_highly_uncertain: Option<LocationTestResult>,
    pub uncertain_vs_highly_uncertain: Option<LocationTestResult>,
}

/// One α row of the report-mode output. Stratum ratios sum to exactly 1 by
/// construction (the highly-uncertain ratio is the complement).
#[derive(Debug, Clone, Serialize)]
pub struct ReportModeSummary {
    pub alpha: Alpha,
    pub ncs_threshold: Tau<f64>,
    pub rank_k: usize,
    pub n_cal: usize,
    pub n_test: usize,
    /// Fraction of test prediction sets containing the positive class.
    pub coverage: f64,
    pub n_empty_sets: usize,
    pub certain: StratumSummary,
    pub uncertain: StratumSummary,
    pub highly_uncertain: StratumSummary,
    /// Certain vs pooled rest, on gt_report_cosine.
    pub comparison_p_value: Option<f64>,
    pub comparison: Option<LocationTestResult>,
    pub pairwise: PairwiseComparisons,
}

/// Report-mode pipeline: min–max fit on calibration cosines, single-class
/// calibration with NCS = 1 − p, three-way stratification per α.
pub fn report_mode_summaries(
    records: &[AlignmentRecord],
    split: &SplitAssignment,
    alphas: &[Alpha],
) -> Result<(MinMaxFit<f64>, Vec<ReportModeSummary>), ReportError> {
    validate_alphas(alphas)?;
    let mut cal: Vec<&AlignmentRecord> = Vec::new();
    let mut test: Vec<&AlignmentRecord> = Vec::new();
    for r in records {
        match split
            .role(&r.case_id)
            .ok_or_else(|| ReportError::MissingSplitRole { case_id: r.case_id.clone() })?
        {
            SplitRole::Calibration => cal.push(r),
            SplitRole::Test => test.push(r),
        }
    }
    if cal.is_empty() {
        return Err(ReportError::EmptyCalibration { scope: REPORT_SCOPE.to_string() });
    }
    if test.is_empty() {
        return Err(ReportError::EmptyTest { scope: REPORT_SCOPE.to_string() });
    }
    let raw_cal: Vec<f64> = cal.iter().map(|r| r.image_report_cosine).collect();
    let fit = MinMaxFit::fit(&raw_cal)?;
    // Every calibration record belongs to the positive (aligned) class, so
    // its nonconformity is 1 − p_alignment.
    let cal_ncs: Vec<NonconformityScore<f64>> = cal
        .iter()
        .map(|r| NonconformityScore::new(1.0 - fit.apply(r.image_report_cosine)))
        .collect::<Result<_, _>>()?;
    let test_p: Vec<f64> = test.iter().map(|r| fit.apply(r.image_report_cosine)).collect();

    let mut summaries = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let threshold = conformal::calibrate_threshold(&cal_ncs, alpha, REPORT_SCOPE)?;
        let mut sets = Vec::with_capacity(test.len());
        let mut strata: Vec<ReportCertainty> = Vec::with_capacity(test.len());
        for &p in &test_p {
            let set = conformal::prediction_set(p, &threshold)?;
            sets.push(set);
            strata.push(classify_report_mode(set));
        }
        let coverage = conformal::report_coverage(&sets)?;
        let n_empty_sets =
            sets.iter().filter(|s| **s == conformal::PredictionSet::Empty).count();
        let gt_of = |want: ReportCertainty| -> Vec<f64> {
            test.iter()
                .zip(&strata)
                .filter(|(r, s)| **s == want && r.gt_report_cosine.is_some())
                .map(|(r, _)| r.gt_report_cosine.expect("filtered on is_some"))
                .collect()
        };
        let count_of =
            |want: ReportCertainty| strata.iter().filter(|s| **s == want).count();
        let n = test.len();
        let n_certain = count_of(ReportCertainty::Certain);
        let n_uncertain = count_of(ReportCertainty::Uncertain);
        let n_highly = n - n_certain - n_uncertain;
        let certain_ratio = n_certain as f64 / n as f64;
        let uncertain_ratio = n_uncertain as f64 / n as f64;
        let mean = |v: &[f64]| {
            if v.is_empty() {
                None
            } else {
                Some(v.iter().sum::<f64>() / v.len() as f64)
            }
        };
        let gt_certain = gt_of(ReportCertainty::Certain);
        let gt_uncertain = gt_of(ReportCertainty::Uncertain);
        let gt_highly = gt_of(ReportCertainty::HighlyUncertain);
        let rest: Vec<f64> =
            gt_uncertain.iter().chain(gt_highly.iter()).copied().collect();
        let comparison = choose_location_test(&gt_certain, &rest).ok();
        let pair = |a: &[f64], b: &[f64]| choose_location_test(a, b).ok();
        summaries.push(ReportModeSummary {
            alpha,
            ncs_threshold: threshold.tau,
            rank_k: threshold.rank_k,
            n_cal: threshold.n_cal,
            n_test: n,
            coverage,
            n_empty_sets,
            certain: StratumSummary {
                n: n_certain,
                ratio: certain_ratio,
                mean_gt_similarity: mean(&gt_certain),
            },
            uncertain: StratumSummary {
                n: n_uncertain,
                ratio: uncertain_ratio,
                mean_gt_similarity: mean(&gt_uncertain),
            },
            highly_uncertain: StratumSummary {
                n: n_highly,
                ratio: 1.0 - certain_ratio - uncertain_ratio,
                mean_gt_similarity: mean(&gt_highly),
            },
            comparison_p_value: comparison.as_ref().map(|c| c.p_value),
            comparison,
            pairwise: PairwiseComparisons {
                certain_vs_uncertain: pair(&gt_certain, &gt_uncertain),
                certain_vs_highly_uncertain: pair(&gt_certain, &gt_highly),
                uncertain_vs_highly_uncertain: pair(&gt_uncertain, &gt_highly),
            },
        });
    }
    Ok((fit, summaries))
}
