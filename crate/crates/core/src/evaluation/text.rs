//! Plain-text table rendering for classify and report outputs.
//!
//! The layout here is part of the CLI contract: golden files compare these
//! strings byte for byte, so any edit is a format change.

use crate::conformal::Tau;
use crate::data::Alpha;
use crate::evaluation::report::{ClassifyOutput, ReportModeSummary};

/// Three decimals, the precision used for score-like values.
fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

fn fmt_opt3(v: Option<f64>) -> String {
    v.map(fmt3).unwrap_or_else(|| "-".to_string())
}

/// Ratios render as percentages with one decimal.
fn fmt_ratio(r: f64) -> String {
    format!("{:.1}%", 100.0 * r)
}

/// Small p-values saturate at a floor instead of rendering as 0.000.
fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

fn fmt_opt_p(p: Option<f64>) -> String {
    p.map(fmt_p).unwrap_or_else(|| "-".to_string())
}

fn fmt_tau(tau: &Tau<f64>) -> String {
    match tau {
        Tau::Finite(v) => fmt3(*v),
        Tau::Infinite => "inf".to_string(),
    }
}

/// Pads every column to its widest cell, two spaces between columns, no
/// trailing whitespace, one line per row.
fn align(rows: &[Vec<String>]) -> String {
    let n_cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; n_cols];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            if i + 1 < row.len() {
                for _ in cell.chars().count()..widths[i] {
                    line.push(' ');
                }
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Classify-mode tables, one section per α in cell order, two rows per
/// finding (certain stratum first). The permutation p-value sits on the
/// certain row; the uncertain row repeats the finding for greppability.
pub fn render_classify_table(output: &ClassifyOutput) -> String {
    let mut alphas: Vec<Alpha> = Vec::new();
    for cell in &output.cells {
        if !alphas.contains(&cell.alpha) {
            alphas.push(cell.alpha);
        }
    }
    let mut out = String::new();
    for (idx, alpha) in alphas.iter().enumerate() {
        if idx > 0 {
            out.push('\n');
        }
        out.push_str(&format!("alpha = {alpha}\n"));
        let mut rows = vec![vec![
            "finding".to_string(),
            "certainty".to_string(),
            "n".to_string(),
            "ratio".to_string(),
            "auroc".to_string(),
            "p_auc_diff".to_string(),
        ]];
        for cell in output.cells.iter().filter(|c| c.alpha == *alpha) {
            let r = &cell.report;
            let auroc_certain = r.metrics_certain.as_ref().and_then(|m| m.auroc);
            let auroc_uncertain = r.metrics_uncertain.as_ref().and_then(|m| m.auroc);
            rows.push(vec![
                cell.finding.clone(),
                "certain".to_string(),
                r.n_certain.to_string(),
                fmt_ratio(r.certain_ratio),
                fmt_opt3(auroc_certain),
                fmt_opt_p(r.auc_diff_p_value),
            ]);
            rows.push(vec![
                cell.finding.clone(),
                "uncertain".to_string(),
                (r.n_test - r.n_certain).to_string(),
                fmt_ratio(r.uncertain_ratio),
                fmt_opt3(auroc_uncertain),
                "-".to_string(),
            ]);
        }
        out.push_str(&align(&rows));
    }
    // Cross-finding correlation footer, only when at least one α had enough
    // findings to compute it.
    if output
        .correlations
        .iter()
        .any(|c| c.pearson_r.is_some() || c.spearman_rho.is_some())
    {
        out.push('\n');
        out.push_str("stratum auroc correlation across findings\n");
        let mut rows = vec![vec![
            "alpha".to_string(),
            "n_findings".to_string(),
            "pearson_r".to_string(),
            "pearson_p".to_string(),
            "spearman_rho".to_string(),
            "spearman_p".to_string(),
        ]];
        for block in &output.correlations {
            rows.push(vec![
                block.alpha.to_string(),
                block.n_findings.to_string(),
                fmt_opt3(block.pearson_r),
                fmt_opt_p(block.pearson_p),
                fmt_opt3(block.spearman_rho),
                fmt_opt_p(block.spearman_p),
            ]);
        }
        out.push_str(&align(&rows));
    }
    out
}

/// Report-mode summary, one row per α.
pub fn render_report_table(summaries: &[ReportModeSummary]) -> String {
    let mut rows = vec![[
        "alpha",
        "ncs_threshold",
        "coverage",
        "certain_ratio",
        "certain_mean",
        "uncertain_ratio",
        "uncertain_mean",
        "highly_uncertain_ratio",
        "highly_uncertain_mean",
        "p_certain_vs_rest",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect::<Vec<_>>()];
    for s in summaries {
        rows.push(vec![
            s.alpha.to_string(),
            fmt_tau(&s.ncs_threshold),
            fmt3(s.coverage),
            fmt_ratio(s.certain.ratio),
            fmt_opt3(s.certain.mean_gt_similarity),
            fmt_ratio(s.uncertain.ratio),
            fmt_opt3(s.uncertain.mean_gt_similarity),
            fmt_ratio(s.highly_uncertain.ratio),
            fmt_opt3(s.highly_uncertain.mean_gt_similarity),
            fmt_opt_p(s.comparison_p_value),
        ]);
    }
    align(&rows)
}
