//! Dataset types, ingestion, and the seeded calibration/test split.
//!
//! Two record shapes exist: per-(case, finding) label scores and per-case
//! report-alignment cosines. Both arrive as CSV or JSON lines, are validated
//! eagerly (errors carry line numbers), and round-trip through the writers
//! with canonical float formatting.

mod parse;
mod split;

pub use parse::{
    alignment_to_csv, alignment_to_jsonl, infer_format, label_dataset_to_csv,
    label_dataset_to_jsonl, parse_alignment_dataset, parse_label_dataset,
    parse_raw_yes_no_dataset, parse_similarity_pair_dataset, FileFormat, RawYesNoRecord,
    SimilarityPairRecord,
};
pub use split::split_cases;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("malformed row at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("{field} out of range at line {line}: {value} not in {range}")]
    OutOfRange { line: usize, field: &'static str, value: f64, range: &'static str },
    #[error("{field} is not a finite number at line {line}")]
    NonFinite { line: usize, field: &'static str },
    #[error("gt must be 0 or 1 at line {line}, got {value:?}")]
    BadLabel { line: usize, value: String },
    #[error("duplicate (case_id, finding) pair at line {line}: ({case_id}, {finding})")]
    DuplicatePair { line: usize, case_id: String, finding: String },
    #[error("duplicate case_id at line {line}: {case_id}")]
    DuplicateCase { line: usize, case_id: String },
    #[error("missing column {name:?} in header")]
    MissingColumn { name: &'static str },
    #[error("unexpected column {name:?} in header")]
    UnexpectedColumn { name: String },
    #[error("dataset is empty")]
    Empty,
    #[error("calibration fraction must be strictly between 0 and 1, got {value}")]
    BadFraction { value: f64 },
    #[error("duplicate case_id in split input: {case_id}")]
    DuplicateSplitId { case_id: String },
    #[error("gt missing at line {line} for case {case_id}: {operation} requires ground truth")]
    MissingGt { line: usize, case_id: String, operation: &'static str },
}

/// Binary ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn as_bit(self) -> u8 {
        match self {
            Label::Neg => 0,
            Label::Pos => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Label::Neg),
            1 => Some(Label::Pos),
            _ => None,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Label::from_bit(v).ok_or_else(|| format!("gt must be 0 or 1, got {v}"))
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.as_bit()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_bit())
    }
}

/// One externally produced score for one finding on one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub case_id: String,
    pub finding: String,
    pub p_yes: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt: Option<Label>,
}

/// One report-alignment record: raw image↔report cosine plus the optional
/// report↔ground-truth cosine used for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub case_id: String,
    pub image_report_cosine: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_report_cosine: Option<f64>,
}

/// Significance level, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(value: f64) -> Result<Self, String> {
        if value.is_finite() && value > 0.0 && value < 1.0 {
            Ok(Alpha(value))
        } else {
            Err(format!("alpha must be strictly between 0 and 1, got {value}"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<'de> Deserialize<'de> for Alpha {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(de)?;
        Alpha::new(v).map_err(serde::de::Error::custom)
    }
}

/// Role of a case in the global split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Calibration,
    Test,
}

impl SplitRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Calibration => "calibration",
            SplitRole::Test => "test",
        }
    }
}

/// One global case-level split shared by every finding.
///
/// Case order is preserved from the input so materialized files stay diffable.
#[derive(Debug, Clone)]
pub struct SplitAssignment {
    seed: u64,
    calibration_fraction: f64,
    ids: Vec<String>,
    roles: HashMap<String, SplitRole>,
}

impl SplitAssignment {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn calibration_fraction(&self) -> f64 {
        self.calibration_fraction
    }

    /// Case ids in input order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn role(&self, case_id: &str) -> Option<SplitRole> {
        self.roles.get(case_id).copied()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_calibration(&self) -> usize {
        self.roles.values().filter(|r| **r == SplitRole::Calibration).count()
    }

    pub fn n_test(&self) -> usize {
        self.len() - self.n_calibration()
    }

    pub(crate) fn from_parts(
        seed: u64,
        calibration_fraction: f64,
        ids: Vec<String>,
        roles: HashMap<String, SplitRole>,
    ) -> Self {
        Self { seed, calibration_fraction, ids, roles }
    }
}

/// Unique case ids of a label dataset, in first-appearance order.
pub fn unique_case_ids(rows: &[LabeledScore]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for row in rows {
        if seen.insert(row.case_id.as_str()) {
            out.push(row.case_id.clone());
        }
    }
    out
}
