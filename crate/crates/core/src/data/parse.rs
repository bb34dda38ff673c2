//! CSV / JSONL ingestion and canonical serialization.
//!
//! Floats are written with the shortest decimal form that round-trips, so
//! serialize ∘ parse ∘ serialize is byte-stable and golden files are
//! meaningful. Parsers report 1-based line numbers (the CSV header is line 1)
//! and reject anything the data model forbids: out-of-range values, labels
//! outside {0, 1}, duplicate keys, unknown columns. The one extra column
//! tolerated on ingest is `split`, so materialized outputs re-ingest cleanly.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use super::{AlignmentRecord, DataError, Label, LabeledScore, SplitAssignment, SplitRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Jsonl,
}

/// Guess the format from a file extension; `.csv` or `.jsonl`/`.ndjson`.
pub fn infer_format(path: &Path) -> Option<FileFormat> {
    match path.extension()?.to_str()? {
        "csv" => Some(FileFormat::Csv),
        "jsonl" | "ndjson" => Some(FileFormat::Jsonl),
        _ => None,
    }
}

/// Extended ingest schema for raw yes/no mass pairs (`--transform yes-no`).
#[derive(Debug, Clone, PartialEq)]
pub struct RawYesNoRecord {
    pub case_id: String,
    pub finding: String,
    pub p_yes_raw: f64,
    pub p_no_raw: f64,
    pub gt: Option<Label>,
}

/// Extended ingest schema for similarity pairs (`--transform sigmoid-diff`).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityPairRecord {
    pub case_id: String,
    pub finding: String,
    pub c_with: f64,
    pub c_without: f64,
    pub gt: Option<Label>,
}

// --- header handling -------------------------------------------------------

/// Maps expected column names to indices; rejects missing or unknown columns,
/// silently accepting a `split` column so materialized files re-ingest.
fn header_indices(
    header: &csv::StringRecord,
    expected: &[&'static str],
) -> Result<Vec<usize>, DataError> {
    let mut indices = Vec::with_capacity(expected.len());
    for name in expected {
        let idx = header
            .iter()
            .position(|h| h == *name)
            .ok_or(DataError::MissingColumn { name })?;
        indices.push(idx);
    }
    for h in header.iter() {
        if h != "split" && !expected.contains(&h) {
            return Err(DataError::UnexpectedColumn { name: h.to_string() });
        }
    }
    Ok(indices)
}

fn parse_f64_field(raw: &str, field: &'static str, line: usize) -> Result<f64, DataError> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| DataError::Malformed { line, reason: format!("cannot parse {field} from {raw:?}") })?;
    if !v.is_finite() {
        return Err(DataError::NonFinite { line, field });
    }
    Ok(v)
}

fn parse_gt_field(raw: &str, line: usize) -> Result<Option<Label>, DataError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    match raw {
        "0" => Ok(Some(Label::Neg)),
        "1" => Ok(Some(Label::Pos)),
        other => Err(DataError::BadLabel { line, value: other.to_string() }),
    }
}

fn check_unit_interval(v: f64, field: &'static str, line: usize) -> Result<(), DataError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(DataError::OutOfRange { line, field, value: v, range: "[0, 1]" });
    }
    Ok(())
}

fn check_cosine_range(v: f64, field: &'static str, line: usize) -> Result<(), DataError> {
    if !(-1.0..=1.0).contains(&v) {
        return Err(DataError::OutOfRange { line, field, value: v, range: "[-1, 1]" });
    }
    Ok(())
}

fn check_nonnegative(v: f64, field: &'static str, line: usize) -> Result<(), DataError> {
    if v < 0.0 {
        return Err(DataError::OutOfRange { line, field, value: v, range: "[0, inf)" });
    }
    Ok(())
}

// --- CSV plumbing ----------------------------------------------------------

/// Runs `row_fn` over data rows with 1-based file line numbers (header = 1).
fn for_each_csv_row(
    input: &str,
    expected: &[&'static str],
    mut row_fn: impl FnMut(usize, &csv::StringRecord, &[usize]) -> Result<(), DataError>,
) -> Result<(), DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| DataError::Malformed { line: 1, reason: e.to_string() })?
        .clone();
    let indices = header_indices(&header, expected)?;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| DataError::Malformed { line, reason: e.to_string() })?;
        if record.len() != header.len() {
            return Err(DataError::Malformed {
                line,
                reason: format!("expected {} fields, got {}", header.len(), record.len()),
            });
        }
        row_fn(line, &record, &indices)?;
    }
    Ok(())
}

/// Yields (line, parsed) for every nonempty JSONL line.
fn for_each_jsonl_row<T: for<'de> Deserialize<'de>>(
    input: &str,
    mut row_fn: impl FnMut(usize, T) -> Result<(), DataError>,
) -> Result<(), DataError> {
    for (i, raw) in input.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: T = serde_json::from_str(raw)
            .map_err(|e| DataError::Malformed { line, reason: e.to_string() })?;
        row_fn(line, parsed)?;
    }
    Ok(())
}

fn gt_from_json(raw: Option<i64>, line: usize) -> Result<Option<Label>, DataError> {
    match raw {
        None => Ok(None),
        Some(0) => Ok(Some(Label::Neg)),
        Some(1) => Ok(Some(Label::Pos)),
        Some(other) => Err(DataError::BadLabel { line, value: other.to_string() }),
    }
}

// --- label dataset ---------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabeledScoreJson {
    case_id: String,
    finding: String,
    p_yes: f64,
    #[serde(default)]
    gt: Option<i64>,
    #[serde(default, rename = "split")]
    _split: Option<String>,
}

pub fn parse_label_dataset(input: &str, format: FileFormat) -> Result<Vec<LabeledScore>, DataError> {
    let mut rows = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut push = |line: usize, row: LabeledScore| -> Result<(), DataError> {
        check_unit_interval(row.p_yes, "p_yes", line)?;
        if !seen.insert((row.case_id.clone(), row.finding.clone())) {
            return Err(DataError::DuplicatePair { line, case_id: row.case_id, finding: row.finding });
        }
        rows.push(row);
        Ok(())
    };
    match format {
        FileFormat::Csv => for_each_csv_row(
            input,
            &["case_id", "finding", "p_yes", "gt"],
            |line, record, idx| {
                let p_yes = parse_f64_field(&record[idx[2]], "p_yes", line)?;
                let gt = parse_gt_field(&record[idx[3]], line)?;
                push(line, LabeledScore {
                    case_id: record[idx[0]].to_string(),
                    finding: record[idx[1]].to_string(),
                    p_yes,
                    gt,
                })
            },
        )?,
        FileFormat::Jsonl => for_each_jsonl_row(input, |line, row: LabeledScoreJson| {
            if !row.p_yes.is_finite() {
                return Err(DataError::NonFinite { line, field: "p_yes" });
            }
            let gt = gt_from_json(row.gt, line)?;
            push(line, LabeledScore { case_id: row.case_id, finding: row.finding, p_yes: row.p_yes, gt })
        })?,
    }
    Ok(rows)
}

// --- alignment dataset -----------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AlignmentJson {
    case_id: String,
    image_report_cosine: f64,
    #[serde(default)]
    gt_report_cosine: Option<f64>,
    #[serde(default, rename = "split")]
    _split: Option<String>,
}

pub fn parse_alignment_dataset(
    input: &str,
    format: FileFormat,
) -> Result<Vec<AlignmentRecord>, DataError> {
    let mut rows = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut push = |line: usize, row: AlignmentRecord| -> Result<(), DataError> {
        check_cosine_range(row.image_report_cosine, "image_report_cosine", line)?;
        if let Some(gt) = row.gt_report_cosine {
            if !gt.is_finite() {
                return Err(DataError::NonFinite { line, field: "gt_report_cosine" });
            }
            check_cosine_range(gt, "gt_report_cosine", line)?;
        }
        if !seen.insert(row.case_id.clone()) {
            return Err(DataError::DuplicateCase { line, case_id: row.case_id });
        }
        rows.push(row);
        Ok(())
    };
    match format {
        FileFormat::Csv => for_each_csv_row(
            input,
            &["case_id", "image_report_cosine", "gt_report_cosine"],
            |line, record, idx| {
                let image = parse_f64_field(&record[idx[1]], "image_report_cosine", line)?;
                let gt_raw = record[idx[2]].trim();
                let gt = if gt_raw.is_empty() {
                    None
                } else {
                    Some(parse_f64_field(gt_raw, "gt_report_cosine", line)?)
                };
                push(line, AlignmentRecord {
                    case_id: record[idx[0]].to_string(),
                    image_report_cosine: image,
                    gt_report_cosine: gt,
                })
            },
        )?,
        FileFormat::Jsonl => for_each_jsonl_row(input, |line, row: AlignmentJson| {
            if !row.image_report_cosine.is_finite() {
                return Err(DataError::NonFinite { line, field: "image_report_cosine" });
            }
            push(line, AlignmentRecord {
                case_id: row.case_id,
                image_report_cosine: row.image_report_cosine,
                gt_report_cosine: row.gt_report_cosine,
            })
        })?,
    }
    Ok(rows)
}

// --- extended transform schemas --------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawYesNoJson {
    case_id: String,
    finding: String,
    p_yes_raw: f64,
    p_no_raw: f64,
    #[serde(default)]
    gt: Option<i64>,
    #[serde(default, rename = "split")]
    _split: Option<String>,
}

pub fn parse_raw_yes_no_dataset(
    input: &str,
    format: FileFormat,
) -> Result<Vec<RawYesNoRecord>, DataError> {
    let mut rows = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut push = |line: usize, row: RawYesNoRecord| -> Result<(), DataError> {
        check_nonnegative(row.p_yes_raw, "p_yes_raw", line)?;
        check_nonnegative(row.p_no_raw, "p_no_raw", line)?;
        if !seen.insert((row.case_id.clone(), row.finding.clone())) {
            return Err(DataError::DuplicatePair { line, case_id: row.case_id, finding: row.finding });
        }
        rows.push(row);
        Ok(())
    };
    match format {
        FileFormat::Csv => for_each_csv_row(
            input,
            &["case_id", "finding", "p_yes_raw", "p_no_raw", "gt"],
            |line, record, idx| {
                let p_yes_raw = parse_f64_field(&record[idx[2]], "p_yes_raw", line)?;
                let p_no_raw = parse_f64_field(&record[idx[3]], "p_no_raw", line)?;
                let gt = parse_gt_field(&record[idx[4]], line)?;
                push(line, RawYesNoRecord {
                    case_id: record[idx[0]].to_string(),
                    finding: record[idx[1]].to_string(),
                    p_yes_raw,
                    p_no_raw,
                    gt,
                })
            },
        )?,
        FileFormat::Jsonl => for_each_jsonl_row(input, |line, row: RawYesNoJson| {
            for (field, v) in [("p_yes_raw", row.p_yes_raw), ("p_no_raw", row.p_no_raw)] {
                if !v.is_finite() {
                    return Err(DataError::NonFinite { line, field });
                }
            }
            let gt = gt_from_json(row.gt, line)?;
            push(line, RawYesNoRecord {
                case_id: row.case_id,
                finding: row.finding,
                p_yes_raw: row.p_yes_raw,
                p_no_raw: row.p_no_raw,
                gt,
            })
        })?,
    }
    Ok(rows)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimilarityPairJson {
    case_id: String,
    finding: String,
    c_with: f64,
    c_without: f64,
    #[serde(default)]
    gt: Option<i64>,
    #[serde(default, rename = "split")]
    _split: Option<String>,
}

pub fn parse_similarity_pair_dataset(
    input: &str,
    format: FileFormat,
) -> Result<Vec<SimilarityPairRecord>, DataError> {
    let mut rows = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut push = |line: usize, row: SimilarityPairRecord| -> Result<(), DataError> {
        check_cosine_range(row.c_with, "c_with", line)?;
        check_cosine_range(row.c_without, "c_without", line)?;
        if !seen.insert((row.case_id.clone(), row.finding.clone())) {
            return Err(DataError::DuplicatePair { line, case_id: row.case_id, finding: row.finding });
        }
        rows.push(row);
        Ok(())
    };
    match format {
        FileFormat::Csv => for_each_csv_row(
            input,
            &["case_id", "finding", "c_with", "c_without", "gt"],
            |line, record, idx| {
                let c_with = parse_f64_field(&record[idx[2]], "c_with", line)?;
                let c_without = parse_f64_field(&record[idx[3]], "c_without", line)?;
                let gt = parse_gt_field(&record[idx[4]], line)?;
                push(line, SimilarityPairRecord {
                    case_id: record[idx[0]].to_string(),
                    finding: record[idx[1]].to_string(),
                    c_with,
                    c_without,
                    gt,
                })
            },
        )?,
        FileFormat::Jsonl => for_each_jsonl_row(input, |line, row: SimilarityPairJson| {
            for (field, v) in [("c_with", row.c_with), ("c_without", row.c_without)] {
                if !v.is_finite() {
                    return Err(DataError::NonFinite { line, field });
                }
            }
            let gt = gt_from_json(row.gt, line)?;
            push(line, SimilarityPairRecord {
                case_id: row.case_id,
                finding: row.finding,
                c_with: row.c_with,
                c_without: row.c_without,
                gt,
            })
        })?,
    }
    Ok(rows)
}

// --- canonical serialization -----------------------------------------------

/// Shortest decimal representation that parses back to the same f64.
///
/// This is what `Display` for floats guarantees; wrapped in a named function
/// so the canonical-format decision is greppable.
pub(crate) fn canonical_float(v: f64) -> String {
    format!("{v}")
}

fn split_field(split: Option<&SplitAssignment>, case_id: &str) -> Option<&'static str> {
    split.map(|s| match s.role(case_id) {
        Some(SplitRole::Calibration) => "calibration",
        Some(SplitRole::Test) | None => "test",
    })
}

/// Serialize a label dataset to CSV, optionally materializing a split column.
pub fn label_dataset_to_csv(rows: &[LabeledScore], split: Option<&SplitAssignment>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["case_id", "finding", "p_yes", "gt"];
    if split.is_some() {
        header.push("split");
    }
    w.write_record(&header).expect("csv write");
    for row in rows {
        let mut fields = vec![
            row.case_id.clone(),
            row.finding.clone(),
            canonical_float(row.p_yes),
            row.gt.map(|g| g.as_bit().to_string()).unwrap_or_default(),
        ];
        if let Some(role) = split_field(split, &row.case_id) {
            fields.push(role.to_string());
        }
        w.write_record(&fields).expect("csv write");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8")
}

/// Builds one JSON object line with keys in the given order; values arrive
/// pre-encoded.
fn jsonl_line(fields: &[(&str, String)]) -> String {
    let body: Vec<String> = fields.iter().map(|(k, v)| format!("\"{k}\":{v}")).collect();
    format!("{{{}}}", body.join(","))
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string encodes")
}

/// Serialize a label dataset to JSON lines, keys in ingest column order.
pub fn label_dataset_to_jsonl(rows: &[LabeledScore], split: Option<&SplitAssignment>) -> String {
    let mut out = String::new();
    for row in rows {
        let mut fields = vec![
            ("case_id", json_string(&row.case_id)),
            ("finding", json_string(&row.finding)),
            ("p_yes", canonical_float(row.p_yes)),
        ];
        if let Some(gt) = row.gt {
            fields.push(("gt", gt.as_bit().to_string()));
        }
        if let Some(role) = split_field(split, &row.case_id) {
            fields.push(("split", json_string(role)));
        }
        let _ = writeln!(out, "{}", jsonl_line(&fields));
    }
    out
}

/// Serialize an alignment dataset to CSV, optionally with a split column.
pub fn alignment_to_csv(rows: &[AlignmentRecord], split: Option<&SplitAssignment>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["case_id", "image_report_cosine", "gt_report_cosine"];
    if split.is_some() {
        header.push("split");
    }
    w.write_record(&header).expect("csv write");
    for row in rows {
        let mut fields = vec![
            row.case_id.clone(),
            canonical_float(row.image_report_cosine),
            row.gt_report_cosine.map(canonical_float).unwrap_or_default(),
        ];
        if let Some(role) = split_field(split, &row.case_id) {
            fields.push(role.to_string());
        }
        w.write_record(&fields).expect("csv write");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8")
}

/// Serialize an alignment dataset to JSON lines, keys in ingest column order.
pub fn alignment_to_jsonl(rows: &[AlignmentRecord], split: Option<&SplitAssignment>) -> String {
    let mut out = String::new();
    for row in rows {
        let mut fields = vec![
            ("case_id", json_string(&row.case_id)),
            ("image_report_cosine", canonical_float(row.image_report_cosine)),
        ];
        if let Some(gt) = row.gt_report_cosine {
            fields.push(("gt_report_cosine", canonical_float(gt)));
        }
        if let Some(role) = split_field(split, &row.case_id) {
            fields.push(("split", json_string(role)));
        }
        let _ = writeln!(out, "{}", jsonl_line(&fields));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_label_roundtrip() {
        let input = "case_id,finding,p_yes,gt\nc001,effusion,0.83,1\nc002,effusion,0.12,\n";
        let rows = parse_label_dataset(input, FileFormat::Csv).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].p_yes, 0.83);
        assert_eq!(rows[0].gt, Some(Label::Pos));
        assert_eq!(rows[1].gt, None);
        assert_eq!(label_dataset_to_csv(&rows, None), input);
    }

    #[test]
    fn out_of_range_p_reports_line_2() {
        let input = "case_id,finding,p_yes,gt\nc002,effusion,1.20,0\n";
        let err = parse_label_dataset(input, FileFormat::Csv).unwrap_err();
        assert_eq!(
            err,
            DataError::OutOfRange { line: 2, field: "p_yes", value: 1.2, range: "[0, 1]" }
        );
        assert!(err.to_string().contains("p_yes out of range at line 2"));
    }

    #[test]
    fn duplicate_pair_rejected() {
        let input = "case_id,finding,p_yes,gt\nc1,eff,0.5,1\nc1,eff,0.6,0\n";
        let err = parse_label_dataset(input, FileFormat::Csv).unwrap_err();
        assert!(matches!(err, DataError::DuplicatePair { line: 3, .. }));
    }

    #[test]
    fn bad_gt_rejected() {
        let input = "case_id,finding,p_yes,gt\nc1,eff,0.5,2\n";
        let err = parse_label_dataset(input, FileFormat::Csv).unwrap_err();
        assert!(matches!(err, DataError::BadLabel { line: 2, .. }));
    }

    #[test]
    fn missing_column_named_in_error() {
        let input = "case_id,finding,p_yes\nc1,eff,0.5\n";
        let err = parse_label_dataset(input, FileFormat::Csv).unwrap_err();
        assert_eq!(err, DataError::MissingColumn { name: "gt" });
        assert!(err.to_string().contains("\"gt\""));
    }

    #[test]
    fn jsonl_alignment_example() {
        let input = "{\"case_id\":\"r1\",\"image_report_cosine\":0.41,\"gt_report_cosine\":0.74}\n";
        let rows = parse_alignment_dataset(input, FileFormat::Jsonl).unwrap();
        assert_eq!(rows[0].case_id, "r1");
        assert_eq!(rows[0].image_report_cosine, 0.41);
        assert_eq!(rows[0].gt_report_cosine, Some(0.74));
        assert_eq!(alignment_to_jsonl(&rows, None), input);
    }

    #[test]
    fn jsonl_missing_gt_cosine_is_legal() {
        let input = "{\"case_id\":\"r1\",\"image_report_cosine\":0.41}\n";
        let rows = parse_alignment_dataset(input, FileFormat::Jsonl).unwrap();
        assert_eq!(rows[0].gt_report_cosine, None);
    }

    #[test]
    fn cosine_range_enforced() {
        let input = "case_id,image_report_cosine,gt_report_cosine\nr1,1.5,\n";
        let err = parse_alignment_dataset(input, FileFormat::Csv).unwrap_err();
        assert!(matches!(err, DataError::OutOfRange { line: 2, field: "image_report_cosine", .. }));
    }

    #[test]
    fn split_column_tolerated_on_ingest() {
        let input = "case_id,finding,p_yes,gt,split\nc1,eff,0.5,1,test\n";
        let rows = parse_label_dataset(input, FileFormat::Csv).unwrap();
        assert_eq!(rows.len(), 1);
        let jl = "{\"case_id\":\"c1\",\"finding\":\"eff\",\"p_yes\":0.5,\"gt\":1,\"split\":\"calibration\"}\n";
        let rows = parse_label_dataset(jl, FileFormat::Jsonl).unwrap();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn unknown_column_rejected() {
        let input = "case_id,finding,p_yes,gt,notes\nc1,eff,0.5,1,hi\n";
        let err = parse_label_dataset(input, FileFormat::Csv).unwrap_err();
        assert_eq!(err, DataError::UnexpectedColumn { name: "notes".to_string() });
    }

    #[test]
    fn yes_no_schema_parses() {
        let input = "case_id,finding,p_yes_raw,p_no_raw,gt\nc1,eff,0.8,0.2,1\n";
        let rows = parse_raw_yes_no_dataset(input, FileFormat::Csv).unwrap();
        assert_eq!(rows[0].p_yes_raw, 0.8);
        let neg = "case_id,finding,p_yes_raw,p_no_raw,gt\nc1,eff,-0.1,0.2,1\n";
        assert!(parse_raw_yes_no_dataset(neg, FileFormat::Csv).is_err());
    }

    #[test]
    fn similarity_pair_schema_parses() {
        let input = "case_id,finding,c_with,c_without,gt\nc1,eff,0.31,0.15,0\n";
        let rows = parse_similarity_pair_dataset(input, FileFormat::Csv).unwrap();
        assert_eq!(rows[0].c_with, 0.31);
        assert_eq!(rows[0].gt, Some(Label::Neg));
    }

    #[test]
    fn canonical_floats_are_shortest_roundtrip() {
        assert_eq!(canonical_float(0.1), "0.1");
        assert_eq!(canonical_float(0.8312), "0.8312");
        assert_eq!(canonical_float(1.0), "1");
        assert_eq!(canonical_float(0.1 + 0.2), "0.30000000000000004");
    }
}
