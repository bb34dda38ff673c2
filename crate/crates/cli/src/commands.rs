//! Subcommand surface and run bodies.
//!
//! Exit codes: 0 success, 1 any usage or data error, 2 coverage-guarantee
//! violation (the one condition a caller may want to distinguish in CI).
//! Every machine-readable output embeds the format version, the resolved
//! configuration, and the PRNG identity, so a file is interpretable without
//! the command line that produced it. The threshold file is the exception:
//! its schema is pinned by the core crate so thresholds can be re-applied by
//! other tooling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cpkit_core::conformal::{write_threshold_file, CalibratedThreshold, ThresholdRecord};
use cpkit_core::data::{
    self, infer_format, split_cases, unique_case_ids, AlignmentRecord, FileFormat, LabeledScore,
    SplitAssignment,
};
use cpkit_core::evaluation::report::{
    classify_findings, report_mode_summaries, REPORT_SCOPE,
};
use cpkit_core::evaluation::text::{render_classify_table, render_report_table};
use cpkit_core::rng::PrngId;
use cpkit_core::synthetic::{coverage_trial_with_rank_offset, CoverageTrialResult, SyntheticSpec};
use cpkit_core::transforms::{normalize_yes_no, sigmoid_similarity_diff, MinMaxFit};
use cpkit_core::FORMAT_VERSION;

use crate::config::{self, OutputFormat, Overrides, Resolved, SEED_ENV};

#[derive(Parser)]
#[command(
    name = "cpkit",
    version,
    about = "Split-conformal certainty stratification for binary findings and report alignment"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate per-finding thresholds and stratify test cases by certainty.
    Classify(ClassifyArgs),
    /// Calibrate one global report-alignment threshold and summarize strata.
    Report(ReportArgs),
    /// Check the finite-sample coverage guarantee on synthetic data.
    ValidateCoverage(ValidateCoverageArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Master seed; may also come from the config file or CPKIT_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated significance levels, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// JSON file supplying defaults for the other options.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory output files are written into.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DatasetArgs {
    /// Input dataset; format inferred from the extension (.csv, .jsonl,
    /// .ndjson).
    #[arg(long)]
    input: PathBuf,
    /// Fraction of cases assigned to calibration.
    #[arg(long)]
    calibration_fraction: Option<f64>,
    /// Which report outputs to write.
    #[arg(long, value_delimiter = ',')]
    formats: Option<Vec<OutputFormat>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassifyTransform {
    /// Input already carries calibrated-looking p_yes in [0, 1].
    None,
    /// Input carries raw yes/no masses; p = yes / (yes + no).
    YesNo,
    /// Input carries with/without similarity pairs; p = logistic(diff).
    SigmoidDiff,
}

impl ClassifyTransform {
    fn name(self) -> &'static str {
        match self {
            ClassifyTransform::None => "none",
            ClassifyTransform::YesNo => "yes-no",
            ClassifyTransform::SigmoidDiff => "sigmoid-diff",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportTransform {
    /// Min-max rescale of the image-report cosine, fitted on calibration.
    MinMax,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    dataset: DatasetArgs,
    /// How to turn input columns into a probability.
    #[arg(long, value_enum, default_value = "none")]
    transform: ClassifyTransform,
    /// Permutation count for the stratum AUROC-difference test.
    #[arg(long)]
    n_perm: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Rescale applied to the raw cosine; only min-max is defined.
    #[arg(long, value_enum, default_value = "min-max")]
    transform: ReportTransform,
}

#[derive(Args)]
struct ValidateCoverageArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Calibration size per trial.
    #[arg(long, default_value_t = 300)]
    n_cal: usize,
    /// Test size per trial.
    #[arg(long, default_value_t = 700)]
    n_test: usize,
    /// Monte-Carlo trials per alpha.
    #[arg(long, default_value_t = 1000)]
    n_trials: usize,
    /// Positive-class rate of the synthetic generator.
    #[arg(long, default_value_t = 0.35)]
    base_rate: f64,
    /// Score separability of the synthetic generator.
    #[arg(long, default_value_t = 2.0)]
    separability: f64,
    /// Logit shift applied to every synthetic score.
    #[arg(long, default_value_t = 0.0)]
    miscalibration: f64,
    /// Monte-Carlo slack added on both sides of the guarantee band.
    #[arg(long, default_value_t = 0.005)]
    slack: f64,
    /// Fault-injection offset added to the calibration rank; testing hook.
    #[arg(long, hide = true, default_value_t = 0, allow_hyphen_values = true)]
    rank_offset: i64,
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Classify(a) => run_classify(a),
        Command::Report(a) => run_report(a),
        Command::ValidateCoverage(a) => run_validate_coverage(a),
    }
}

// --- shared plumbing ---------------------------------------------------------

/// Configuration echoed into every output of a dataset run.
#[derive(Serialize)]
struct ConfigEcho {
    input: String,
    transform: &'static str,
    seed: u64,
    alphas: Vec<f64>,
    calibration_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_perm: Option<usize>,
    formats: Vec<&'static str>,
}

fn basename(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| {
        path.to_string_lossy().into_owned()
    })
}

fn read_input(path: &Path) -> Result<(String, FileFormat)> {
    let format = infer_format(path).ok_or_else(|| {
        anyhow!(
            "cannot infer input format from {}: expected .csv, .jsonl, or .ndjson",
            path.display()
        )
    })?;
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((text, format))
}

fn write_output(out_dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = out_dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("report serialization");
    out.push('\n');
    out
}

/// The `#`-prefixed provenance header of report.txt.
fn text_header(mode: &str, echo: &ConfigEcho, prng: &PrngId, split: &SplitAssignment) -> String {
    let alphas: Vec<String> = echo.alphas.iter().map(|a| a.to_string()).collect();
    let mut h = String::new();
    let _ = writeln!(h, "# format_version {FORMAT_VERSION}");
    let _ = writeln!(h, "# mode {mode}");
    let _ = writeln!(h, "# input {}", echo.input);
    let _ = writeln!(h, "# transform {}", echo.transform);
    let _ = writeln!(h, "# seed {}", echo.seed);
    let _ = writeln!(h, "# prng {}", prng.algorithm);
    let _ = writeln!(h, "# alphas {}", alphas.join(" "));
    let _ = writeln!(h, "# calibration_fraction {}", echo.calibration_fraction);
    let _ = writeln!(h, "# n_calibration {}", split.n_calibration());
    let _ = writeln!(h, "# n_test {}", split.n_test());
    h.push('\n');
    h
}

fn split_suffix(format: FileFormat) -> &'static str {
    match format {
        FileFormat::Csv => "csv",
        FileFormat::Jsonl => "jsonl",
    }
}

// --- classify ----------------------------------------------------------------

fn load_classify_rows(
    text: &str,
    format: FileFormat,
    transform: ClassifyTransform,
) -> Result<Vec<LabeledScore>> {
    let rows = match transform {
        ClassifyTransform::None => data::parse_label_dataset(text, format)?,
        ClassifyTransform::YesNo => data::parse_raw_yes_no_dataset(text, format)?
            .into_iter()
            .map(|r| {
                Ok(LabeledScore {
                    case_id: r.case_id,
                    finding: r.finding,
                    p_yes: normalize_yes_no(r.p_yes_raw, r.p_no_raw)?,
                    gt: r.gt,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        ClassifyTransform::SigmoidDiff => data::parse_similarity_pair_dataset(text, format)?
            .into_iter()
            .map(|r| {
                Ok(LabeledScore {
                    case_id: r.case_id,
                    finding: r.finding,
                    p_yes: sigmoid_similarity_diff(r.c_with, r.c_without)?,
                    gt: r.gt,
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(rows)
}

#[derive(Serialize)]
struct ClassifyEnvelope<'a> {
    format_version: u32,
    mode: &'static str,
    config: &'a ConfigEcho,
    prng: &'a PrngId,
    n_calibration: usize,
    n_test: usize,
    cells: &'a [cpkit_core::evaluation::report::ClassifyCell],
    correlations: &'a [cpkit_core::evaluation::report::CorrelationBlock],
}

fn run_classify(a: ClassifyArgs) -> Result<i32> {
    let resolved = config::resolve(&Overrides {
        config_path: a.common.config.as_deref(),
        seed: a.common.seed,
        alphas: a.common.alphas.as_deref(),
        calibration_fraction: a.dataset.calibration_fraction,
        n_perm: a.n_perm,
        formats: a.dataset.formats.as_deref(),
    })?;
    let (text, format) = read_input(&a.dataset.input)?;
    let rows = load_classify_rows(&text, format, a.transform)?;
    let ids = unique_case_ids(&rows);
    let split = split_cases(&ids, resolved.calibration_fraction, resolved.seed)?;
    let output = classify_findings(&rows, &split, &resolved.alphas, resolved.n_perm, resolved.seed)?;

    let prng = PrngId::current(resolved.seed);
    let echo = ConfigEcho {
        input: basename(&a.dataset.input),
        transform: a.transform.name(),
        seed: resolved.seed,
        alphas: resolved.alpha_values(),
        calibration_fraction: resolved.calibration_fraction,
        n_perm: Some(resolved.n_perm),
        formats: resolved.formats.iter().map(|f| f.name()).collect(),
    };

    fs::create_dir_all(&a.common.out_dir)
        .with_context(|| format!("creating {}", a.common.out_dir.display()))?;
    if resolved.wants(OutputFormat::Json) {
        let envelope = ClassifyEnvelope {
            format_version: FORMAT_VERSION,
            mode: "classify",
            config: &echo,
            prng: &prng,
            n_calibration: split.n_calibration(),
            n_test: split.n_test(),
            cells: &output.cells,
            correlations: &output.correlations,
        };
        write_output(&a.common.out_dir, "report.json", &to_pretty_json(&envelope))?;
    }
    if resolved.wants(OutputFormat::Text) {
        let body = text_header("classify", &echo, &prng, &split) + &render_classify_table(&output);
        write_output(&a.common.out_dir, "report.txt", &body)?;
    }
    let records: Vec<ThresholdRecord> = output
        .cells
        .iter()
        .map(|c| ThresholdRecord::new(&c.threshold, None, prng.clone()))
        .collect();
    write_output(&a.common.out_dir, "thresholds.json", &write_threshold_file(&records))?;
    let materialized = match format {
        FileFormat::Csv => data::label_dataset_to_csv(&rows, Some(&split)),
        FileFormat::Jsonl => data::label_dataset_to_jsonl(&rows, Some(&split)),
    };
    let name = format!("data_with_split.{}", split_suffix(format));
    write_output(&a.common.out_dir, &name, &materialized)?;
    Ok(0)
}

// --- report ------------------------------------------------------------------

#[derive(Serialize)]
struct ReportEnvelope<'a> {
    format_version: u32,
    mode: &'static str,
    config: &'a ConfigEcho,
    prng: &'a PrngId,
    n_calibration: usize,
    n_test: usize,
    min_max: &'a MinMaxFit<f64>,
    summaries: &'a [cpkit_core::evaluation::report::ReportModeSummary],
}

fn run_report(a: ReportArgs) -> Result<i32> {
    let resolved = config::resolve(&Overrides {
        config_path: a.common.config.as_deref(),
        seed: a.common.seed,
        alphas: a.common.alphas.as_deref(),
        calibration_fraction: a.dataset.calibration_fraction,
        n_perm: None,
        formats: a.dataset.formats.as_deref(),
    })?;
    let (text, format) = read_input(&a.dataset.input)?;
    let records: Vec<AlignmentRecord> = data::parse_alignment_dataset(&text, format)?;
    let ids: Vec<String> = records.iter().map(|r| r.case_id.clone()).collect();
    let split = split_cases(&ids, resolved.calibration_fraction, resolved.seed)?;
    let (fit, summaries) = report_mode_summaries(&records, &split, &resolved.alphas)?;

    let prng = PrngId::current(resolved.seed);
    let echo = ConfigEcho {
        input: basename(&a.dataset.input),
        transform: "min-max",
        seed: resolved.seed,
        alphas: resolved.alpha_values(),
        calibration_fraction: resolved.calibration_fraction,
        n_perm: None,
        formats: resolved.formats.iter().map(|f| f.name()).collect(),
    };

    fs::create_dir_all(&a.common.out_dir)
        .with_context(|| format!("creating {}", a.common.out_dir.display()))?;
    if resolved.wants(OutputFormat::Json) {
        let envelope = ReportEnvelope {
            format_version: FORMAT_VERSION,
            mode: "report",
            config: &echo,
            prng: &prng,
            n_calibration: split.n_calibration(),
            n_test: split.n_test(),
            min_max: &fit,
            summaries: &summaries,
        };
        write_output(&a.common.out_dir, "report.json", &to_pretty_json(&envelope))?;
    }
    if resolved.wants(OutputFormat::Text) {
        let body = text_header("report", &echo, &prng, &split) + &render_report_table(&summaries);
        write_output(&a.common.out_dir, "report.txt", &body)?;
    }
    let records_out: Vec<ThresholdRecord> = summaries
        .iter()
        .map(|s| {
            let threshold = CalibratedThreshold {
                scope: REPORT_SCOPE.to_string(),
                alpha: s.alpha,
                tau: s.ncs_threshold,
                n_cal: s.n_cal,
                rank_k: s.rank_k,
            };
            ThresholdRecord::new(&threshold, Some(fit.clone()), prng.clone())
        })
        .collect();
    write_output(&a.common.out_dir, "thresholds.json", &write_threshold_file(&records_out))?;
    let materialized = match format {
        FileFormat::Csv => data::alignment_to_csv(&records, Some(&split)),
        FileFormat::Jsonl => data::alignment_to_jsonl(&records, Some(&split)),
    };
    let name = format!("data_with_split.{}", split_suffix(format));
    write_output(&a.common.out_dir, &name, &materialized)?;
    Ok(0)
}

// --- validate-coverage ---------------------------------------------------------

#[derive(Serialize)]
struct CoverageConfigEcho {
    seed: u64,
    alphas: Vec<f64>,
    n_cal: usize,
    n_test: usize,
    n_trials: usize,
    base_rate: f64,
    separability: f64,
    miscalibration: f64,
    slack: f64,
    rank_offset: i64,
}

#[derive(Serialize)]
struct CoverageEnvelope<'a> {
    format_version: u32,
    mode: &'static str,
    config: &'a CoverageConfigEcho,
    prng: &'a PrngId,
    pass: bool,
    results: &'a [CoverageTrialResult],
}

fn run_validate_coverage(a: ValidateCoverageArgs) -> Result<i32> {
    let resolved: Resolved = config::resolve(&Overrides {
        config_path: a.common.config.as_deref(),
        seed: a.common.seed,
        alphas: a.common.alphas.as_deref(),
        ..Overrides::default()
    })?;
    if !a.slack.is_finite() || a.slack < 0.0 {
        bail!("slack must be finite and nonnegative, got {}", a.slack);
    }
    let spec = SyntheticSpec {
        n_cases: a.n_cal + a.n_test,
        base_rate: a.base_rate,
        separability: a.separability,
        miscalibration: a.miscalibration,
        seed: resolved.seed,
    };
    // The same master seed is passed for every alpha, so all alphas are
    // evaluated on identical trial datasets; differences between rows are
    // purely the threshold's.
    let mut results = Vec::with_capacity(resolved.alphas.len());
    let mut pass = true;
    for &alpha in &resolved.alphas {
        let r = coverage_trial_with_rank_offset(
            &spec,
            alpha,
            a.n_cal,
            a.n_test,
            a.n_trials,
            resolved.seed,
            a.rank_offset,
        )?;
        let ok = r.mean_coverage >= r.guarantee_lo - a.slack
            && r.mean_coverage <= r.guarantee_hi + a.slack;
        println!(
            "alpha {}: mean coverage {:.4} vs [{:.4}, {:.4}] widened by {}: {}",
            alpha,
            r.mean_coverage,
            r.guarantee_lo,
            r.guarantee_hi,
            a.slack,
            if ok { "ok" } else { "violated" }
        );
        pass &= ok;
        results.push(r);
    }

    let prng = PrngId::current(resolved.seed);
    let echo = CoverageConfigEcho {
        seed: resolved.seed,
        alphas: resolved.alpha_values(),
        n_cal: a.n_cal,
        n_test: a.n_test,
        n_trials: a.n_trials,
        base_rate: a.base_rate,
        separability: a.separability,
        miscalibration: a.miscalibration,
        slack: a.slack,
        rank_offset: a.rank_offset,
    };
    let envelope = CoverageEnvelope {
        format_version: FORMAT_VERSION,
        mode: "validate-coverage",
        config: &echo,
        prng: &prng,
        pass,
        results: &results,
    };
    fs::create_dir_all(&a.common.out_dir)
        .with_context(|| format!("creating {}", a.common.out_dir.display()))?;
    write_output(&a.common.out_dir, "coverage.json", &to_pretty_json(&envelope))?;
    if pass {
        println!("coverage guarantee holds");
        Ok(0)
    } else {
        println!("coverage guarantee violated");
        Ok(2)
    }
}

// SEED_ENV is re-exported through config; referenced here so the help text
// and the implementation cannot drift apart silently.
const _: &str = SEED_ENV;
