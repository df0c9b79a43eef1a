//! CSV ingestion and JSON/CSV emission.
//!
//! Input CSV: a header row with a `y` column, regressor columns whose names start with `x`
//! and optional instrument columns whose names start with `z`. Without `z` columns the
//! regressors are their own instruments.
//!
//! JSON output is an envelope `{"schema_version", "command", "result"}`; floats use the
//! shortest representation that parses back to the same `f64`. CSV floats are written as
//! `{:.16e}` (17 significant digits).

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use see_core::bandwidth::BandwidthReport;
use see_core::estimator::SeeFit;
use see_core::instruments::Dataset;
use see_core::montecarlo::{McResult, PowerCurve};
use see_core::SeeError;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SieveOptions {
    pub degree: usize,
    pub interactions: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemaOptions {
    pub q: f64,
    pub add_intercept: bool,
    pub sieve: Option<SieveOptions>,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        SchemaOptions { q: 0.5, add_intercept: false, sieve: None }
    }
}

enum Role {
    Y,
    X,
    Z,
}

fn classify(name: &str) -> CliResult<Role> {
    let lower = name.trim().to_ascii_lowercase();
    if lower == "y" {
        Ok(Role::Y)
    } else if lower.starts_with('x') {
        Ok(Role::X)
    } else if lower.starts_with('z') {
        Ok(Role::Z)
    } else {
        Err(CliError::Schema(format!("unrecognized column `{name}` (expected y, x*, z*)")))
    }
}

fn io_error(path: &Path, source: io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}

pub fn load_dataset(path: &Path, opts: &SchemaOptions) -> CliResult<Dataset> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    read_dataset(file, opts)
}

pub fn read_dataset<R: Read>(reader: R, opts: &SchemaOptions) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::Schema(format!("cannot read header row: {e}")))?.clone();
    let roles: Vec<Role> = headers.iter().map(classify).collect::<CliResult<_>>()?;
    let y_cols = roles.iter().filter(|r| matches!(r, Role::Y)).count();
    if y_cols != 1 {
        return Err(CliError::Schema(format!("expected exactly one `y` column, found {y_cols}")));
    }
    let x_count = roles.iter().filter(|r| matches!(r, Role::X)).count();
    let z_count = roles.iter().filter(|r| matches!(r, Role::Z)).count();
    if x_count == 0 && !opts.add_intercept {
        return Err(CliError::Schema("no x* columns and no --add-intercept".into()));
    }

    let mut y = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    let mut zs: Vec<f64> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| {
            let line = e.position().map_or(row + 1, |p| p.line() as usize);
            CliError::Parse { row, line, message: e.to_string() }
        })?;
        let line = record.position().map_or(row + 1, |p| p.line() as usize);
        if record.len() != roles.len() {
            return Err(CliError::Parse { row, line, message: format!("expected {} fields, found {}", roles.len(), record.len()) });
        }
        if opts.add_intercept {
            xs.push(1.0);
            if z_count > 0 {
                zs.push(1.0);
            }
        }
        for ((cell, role), name) in record.iter().zip(&roles).zip(headers.iter()) {
            let v: f64 = cell
                .parse()
                .map_err(|_| CliError::Parse { row, line, message: format!("column `{name}`: cannot parse `{cell}` as a number") })?;
            if !v.is_finite() {
                return Err(CliError::Parse { row, line, message: format!("column `{name}`: non-finite value `{cell}`") });
            }
            match role {
                Role::Y => y.push(v),
                Role::X => xs.push(v),
                Role::Z => zs.push(v),
            }
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(CliError::Schema("no data rows".into()));
    }
    let d = x_count + usize::from(opts.add_intercept);
    let y = DVector::from_vec(y);
    let x = DMatrix::from_row_slice(n, d, &xs);
    let result = if z_count == 0 {
        match opts.sieve {
            Some(s) => Dataset::sieve(y, x.clone(), &x, opts.q, s.degree, s.interactions),
            None => Dataset::exogenous(y, x, opts.q),
        }
    } else {
        let dz = z_count + usize::from(opts.add_intercept);
        let z = DMatrix::from_row_slice(n, dz, &zs);
        match opts.sieve {
            Some(s) => Dataset::sieve(y, x, &z, opts.q, s.degree, s.interactions),
            None if dz == d => Dataset::new(y, x, z, opts.q),
            None if dz > d => Dataset::projected(y, x, &z, opts.q),
            None => Err(SeeError::DimensionMismatch(format!(
                "{dz} instrument columns for {d} regressors; the model must be exactly identified (d_z = d) \
                 or over-identified (d_z > d, projected); use --sieve-degree for a sieve basis"
            ))),
        }
    };
    result.map_err(|e| match e {
        SeeError::RankDeficient { .. } => CliError::Rank(e.to_string()),
        other => CliError::Core(other),
    })
}

#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub result: &'a T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOutput {
    pub beta: Vec<f64>,
    pub h: f64,
    pub h_mode: String,
    pub kernel: String,
    pub q: f64,
    pub n: usize,
    pub d: usize,
    pub moment_norm: f64,
    pub iterations: usize,
    pub bandwidth: Option<BandwidthReport>,
}

impl FitOutput {
    pub fn new(fit: &SeeFit, data: &Dataset, h_mode: &str, bandwidth: Option<BandwidthReport>) -> Self {
        FitOutput {
            beta: fit.beta.iter().copied().collect(),
            h: fit.h,
            h_mode: h_mode.to_string(),
            kernel: fit.kernel.to_string(),
            q: data.q,
            n: data.n(),
            d: data.d(),
            moment_norm: fit.moment_norm,
            iterations: fit.iterations,
            bandwidth,
        }
    }
}

/// Opens `path`, or standard output when absent.
pub fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match path {
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?))),
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

fn write_err(path: Option<&Path>, e: io::Error) -> CliError {
    io_error(path.unwrap_or(Path::new("<stdout>")), e)
}

pub fn emit_json<T: Serialize>(command: &str, result: &T, path: Option<&Path>) -> CliResult<()> {
    let mut out = sink(path)?;
    let env = Envelope { schema_version: SCHEMA_VERSION, command, result };
    serde_json::to_writer_pretty(&mut out, &env).map_err(|e| write_err(path, e.into()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| write_err(path, e))
}

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

fn csv_err(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::Io { path: "<csv output>".into(), source: io },
        other => CliError::Io { path: "<csv output>".into(), source: io::Error::other(format!("{other:?}")) },
    }
}

/// `coef,estimate` rows.
pub fn write_fit_csv<W: Write>(fit: &FitOutput, w: W) -> CliResult<()> {
    let mut wr = csv_writer(w);
    wr.write_record(["coef", "estimate"]).map_err(csv_err)?;
    for (k, b) in fit.beta.iter().enumerate() {
        wr.write_record([k.to_string(), fmt_float(*b)]).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| write_err(None, e))
}

/// One row per (replication, estimator, coefficient).
pub fn write_draws_csv<W: Write>(res: &McResult, w: W) -> CliResult<()> {
    let mut wr = csv_writer(w);
    wr.write_record(["rep", "estimator", "coef", "estimate", "truth"]).map_err(csv_err)?;
    for (label, draws) in res.estimator_labels.iter().zip(&res.draws) {
        for draw in draws {
            for (k, b) in draw.beta.iter().enumerate() {
                wr.write_record([draw.rep.to_string(), label.clone(), k.to_string(), fmt_float(*b), fmt_float(res.truth[k])])
                    .map_err(csv_err)?;
            }
        }
    }
    wr.flush().map_err(|e| write_err(None, e))
}

/// `estimator,coef,mse,robust_mse,median_bias,mean_bias,draws,failures`; metrics are empty when
/// fewer than two replications succeeded.
pub fn write_summary_csv<W: Write>(res: &McResult, w: W) -> CliResult<()> {
    let mut wr = csv_writer(w);
    wr.write_record(["estimator", "coef", "mse", "robust_mse", "median_bias", "mean_bias", "draws", "failures"])
        .map_err(csv_err)?;
    for s in &res.summaries {
        if s.coefs.is_empty() {
            for k in 0..res.truth.len() {
                wr.write_record([s.label.clone(), k.to_string(), String::new(), String::new(), String::new(), String::new(), s.draws.to_string(), s.failures.to_string()])
                    .map_err(csv_err)?;
            }
            continue;
        }
        for c in &s.coefs {
            wr.write_record([
                s.label.clone(),
                c.coef.to_string(),
                fmt_float(c.mse),
                fmt_float(c.robust_mse),
                fmt_float(c.median_bias),
                fmt_float(c.mean_bias),
                s.draws.to_string(),
                s.failures.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    wr.flush().map_err(|e| write_err(None, e))
}

/// `delta,estimator,rejection_rate`.
pub fn write_power_csv<W: Write>(curve: &PowerCurve, w: W) -> CliResult<()> {
    let mut wr = csv_writer(w);
    wr.write_record(["delta", "estimator", "rejection_rate"]).map_err(csv_err)?;
    for p in &curve.points {
        wr.write_record([fmt_float(p.delta), p.estimator.clone(), fmt_float(p.rejection_rate)]).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| write_err(None, e))
}
