//! Layered run configuration.
//!
//! Precedence, highest first: command-line flags, the `--config` JSON file,
//! the `CPKIT_SEED` environment variable (seed only), built-in defaults.
//! Resolution is eager so a bad value fails before any input is read.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use cpkit_core::data::Alpha;
use cpkit_core::{DEFAULT_ALPHAS, DEFAULT_CALIBRATION_FRACTION};

/// Environment variable consulted for the seed when neither the flag nor the
/// config file sets one.
pub const SEED_ENV: &str = "CPKIT_SEED";

/// Default permutation count for the stratum AUROC-difference test.
pub const DEFAULT_N_PERM: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
}

impl OutputFormat {
    pub fn name(self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Text => "text",
        }
    }
}

/// Shape of the `--config` file. Unknown keys are rejected so typos fail
/// loudly instead of silently falling back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    alphas: Option<Vec<f64>>,
    calibration_fraction: Option<f64>,
    n_perm: Option<usize>,
    formats: Option<Vec<String>>,
}

/// Values a subcommand read from its flags; `None` means "not given".
#[derive(Debug, Default)]
pub struct Overrides<'a> {
    pub config_path: Option<&'a Path>,
    pub seed: Option<u64>,
    pub alphas: Option<&'a [f64]>,
    pub calibration_fraction: Option<f64>,
    pub n_perm: Option<usize>,
    pub formats: Option<&'a [OutputFormat]>,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub seed: u64,
    pub alphas: Vec<Alpha>,
    pub calibration_fraction: f64,
    pub n_perm: usize,
    pub formats: Vec<OutputFormat>,
}

impl Resolved {
    pub fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }

    pub fn alpha_values(&self) -> Vec<f64> {
        self.alphas.iter().map(|a| a.value()).collect()
    }
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => {
            let seed = raw.trim().parse::<u64>().with_context(|| {
                format!("{SEED_ENV} must be a nonnegative integer, got {raw:?}")
            })?;
            Ok(Some(seed))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).context(format!("reading {SEED_ENV}")),
    }
}

fn parse_alphas(raw: &[f64]) -> Result<Vec<Alpha>> {
    let alphas: Vec<Alpha> = raw
        .iter()
        .map(|&v| Alpha::new(v).map_err(anyhow::Error::msg))
        .collect::<Result<_>>()?;
    if alphas.windows(2).any(|w| w[1].value() <= w[0].value()) {
        bail!("alphas must be strictly increasing");
    }
    Ok(alphas)
}

fn parse_formats(raw: &[String]) -> Result<Vec<OutputFormat>> {
    raw.iter()
        .map(|s| match s.as_str() {
            "json" => Ok(OutputFormat::Json),
            "text" => Ok(OutputFormat::Text),
            other => bail!("unknown format {other:?} (expected \"json\" or \"text\")"),
        })
        .collect()
}

fn canonical_formats(mut formats: Vec<OutputFormat>) -> Result<Vec<OutputFormat>> {
    if formats.is_empty() {
        bail!("formats list is empty");
    }
    formats.sort();
    formats.dedup();
    Ok(formats)
}

pub fn resolve(o: &Overrides) -> Result<Resolved> {
    let file = match o.config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str::<ConfigFile>(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => ConfigFile::default(),
    };

    let seed = match o.seed.or(file.seed) {
        Some(s) => s,
        None => seed_from_env()?.unwrap_or(0),
    };

    let alphas = match (o.alphas, &file.alphas) {
        (Some(flag), _) => parse_alphas(flag)?,
        (None, Some(cfg)) => parse_alphas(cfg)?,
        (None, None) => parse_alphas(&DEFAULT_ALPHAS)?,
    };

    let calibration_fraction = o
        .calibration_fraction
        .or(file.calibration_fraction)
        .unwrap_or(DEFAULT_CALIBRATION_FRACTION);

    let n_perm = o.n_perm.or(file.n_perm).unwrap_or(DEFAULT_N_PERM);

    let formats = match (o.formats, &file.formats) {
        (Some(flag), _) => canonical_formats(flag.to_vec())?,
        (None, Some(cfg)) => canonical_formats(parse_formats(cfg)?)?,
        (None, None) => vec![OutputFormat::Json, OutputFormat::Text],
    };

    Ok(Resolved { seed, alphas, calibration_fraction, n_perm, formats })
}
