//! Run configuration: an optional TOML file with the same keys as the flags. Flags win.
//!
//! ```toml
//! q = 0.25
//! kernel = "horowitz4"
//! h = "plugin"        # or "tiny", "huge", or a number
//! alpha = 0.05
//! seed = 42
//! parallelism = 4
//! reps = 1000
//! dgp = "H11"
//! estimators = "see-plugin,scf,tiny-h,iv"
//! ```

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use see_core::inference::BandwidthChoice;

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_Q: f64 = 0.5;
pub const DEFAULT_KERNEL: &str = "horowitz4";
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_REPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::Config(format!("unknown format `{other}` (expected csv or json)"))),
        }
    }
}

/// Bandwidth mode as written in a config file: a name or a number.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum HSetting {
    Value(f64),
    Name(String),
}

/// Parses `plugin`, `tiny`, `huge` or a positive number.
pub fn parse_h_mode(s: &str) -> CliResult<BandwidthChoice> {
    match s.trim().to_ascii_lowercase().as_str() {
        "plugin" | "plug-in" => Ok(BandwidthChoice::Plugin),
        "tiny" => Ok(BandwidthChoice::Tiny),
        "huge" => Ok(BandwidthChoice::Huge),
        other => match other.parse::<f64>() {
            Ok(h) if h > 0.0 && h.is_finite() => Ok(BandwidthChoice::Fixed(h)),
            _ => Err(CliError::Config(format!("bandwidth must be plugin, tiny, huge or a positive number, got `{s}`"))),
        },
    }
}

impl HSetting {
    pub fn to_choice(&self) -> CliResult<BandwidthChoice> {
        match self {
            HSetting::Value(h) => parse_h_mode(&h.to_string()),
            HSetting::Name(s) => parse_h_mode(s),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<String>,
    pub q: Option<f64>,
    pub kernel: Option<String>,
    pub h: Option<HSetting>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub reps: Option<usize>,
    pub dgp: Option<String>,
    pub n: Option<usize>,
    pub estimators: Option<String>,
    pub methods: Option<String>,
    pub deltas: Option<Vec<f64>>,
    pub add_intercept: Option<bool>,
    pub sieve_degree: Option<usize>,
    pub interactions: Option<bool>,
    pub format: Option<String>,
    pub full_scale: Option<bool>,
}

pub fn parse_config(text: &str) -> CliResult<FileConfig> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> CliResult<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
    parse_config(&text)
}

/// Flag value, else config value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn validate_q(q: f64) -> CliResult<f64> {
    if q > 0.0 && q < 1.0 {
        Ok(q)
    } else {
        Err(CliError::Config(format!("q must be in (0, 1), got {q}")))
    }
}

pub fn validate_parallelism(p: usize) -> CliResult<usize> {
    if p >= 1 {
        Ok(p)
    } else {
        Err(CliError::Config("parallelism must be at least 1".into()))
    }
}

pub fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Comma-separated list of numbers.
pub fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Config(format!("cannot parse `{t}` as a number"))))
        .collect()
}
