//! On-disk formats.
//!
//! * Data files: one decimal literal per line. Anything after `#` is a
//!   comment and blank lines are skipped.
//! * Fit files: a single JSON document with `kind = "fit"`.
//! * Ensemble files: JSON lines. The first line is a header
//!   (`kind = "ensemble"`, resolved config, library version); each further
//!   line is one chain record in stream order.
//! * Band and diagnostic tables: CSV with a header row.
//!
//! Every JSON document carries `schema_version`. Floats are written in
//! shortest round-trip form, so reading a file back reproduces the exact
//! values that were computed.

use std::fmt::Write as _;

use logcon::{ChainDiagnostics, KktReport, LogConcaveDensity, PwlConcave};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Parse a data file. Errors name the 1-based line.
pub fn parse_data(text: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(x) if x.is_finite() => out.push(x),
            _ => {
                return Err(CliError::usage(format!(
                    "line {}: expected a finite number, got {line:?}",
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

pub fn write_data(xs: &[f64]) -> String {
    let mut s = String::with_capacity(xs.len() * 20);
    for &x in xs {
        s.push_str(&fmt_float(x));
        s.push('\n');
    }
    s
}

/// Shortest round-trip form; scientific notation for very small or large
/// magnitudes.
pub fn fmt_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub segment_masses: Vec<f64>,
    pub total_mass: f64,
}

impl FitRecord {
    pub fn from_density(f: &LogConcaveDensity) -> Self {
        Self {
            knots: f.knots().to_vec(),
            values: f.log_values().to_vec(),
            segment_masses: f.segment_masses().to_vec(),
            total_mass: f.total_mass(),
        }
    }

    pub fn to_density(&self) -> Result<LogConcaveDensity, CliError> {
        let shape = PwlConcave::new(self.knots.clone(), self.values.clone())
            .map_err(|e| CliError::usage(format!("corrupt fit: {e}")))?;
        LogConcaveDensity::from_normalized(shape)
            .map_err(|e| CliError::usage(format!("corrupt fit: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktRecord {
    pub max_hinge_violation: f64,
    pub sandwich_lower_ok: bool,
    pub sandwich_upper_ok: bool,
    pub mass_error: f64,
    pub mean_gap: f64,
    pub certified: bool,
}

impl KktRecord {
    pub fn new(r: &KktReport, tol: f64, scale: f64) -> Self {
        Self {
            max_hinge_violation: r.max_hinge_violation,
            sandwich_lower_ok: r.sandwich_lower_ok,
            sandwich_upper_ok: r.sandwich_upper_ok,
            mass_error: r.mass_error,
            mean_gap: r.mean_gap,
            certified: r.certifies(tol, scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub input: String,
    pub n: u64,
    pub distinct: usize,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub schema_version: u32,
    pub kind: String,
    pub library_version: String,
    pub config: FitConfig,
    pub fit: FitRecord,
    pub kkt: KktRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum RuleConfig {
    Fixed { m: u64 },
    Adaptive { epsilon: f64, window: usize, m_max: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorConfig {
    pub input: String,
    pub n: u64,
    pub b: usize,
    pub rule: RuleConfig,
    pub seed: u64,
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleHeader {
    pub schema_version: u32,
    pub kind: String,
    pub library_version: String,
    pub config: PosteriorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub sup_diffs: Vec<f64>,
    pub solver_failures: usize,
    pub stopped_at: u64,
    pub initial_size: u64,
    pub flagged: bool,
}

impl DiagnosticsRecord {
    pub fn new(d: &ChainDiagnostics) -> Self {
        Self {
            sup_diffs: d.sup_diffs.clone(),
            solver_failures: d.solver_failures,
            stopped_at: d.stopped_at,
            initial_size: d.initial_size,
            flagged: d.flagged(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub stream_id: u64,
    pub fit: FitRecord,
    pub diagnostics: DiagnosticsRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleFile {
    pub header: EnsembleHeader,
    pub chains: Vec<ChainRecord>,
}

impl EnsembleFile {
    pub fn to_jsonl(&self) -> String {
        let mut s = serde_json::to_string(&self.header).expect("header serializes");
        s.push('\n');
        for c in &self.chains {
            s.push_str(&serde_json::to_string(c).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| CliError::usage("ensemble file is empty"))?;
        let header: EnsembleHeader = parse_versioned(first, "ensemble", 1)?;
        let mut chains = Vec::new();
        for (i, line) in lines {
            let rec: ChainRecord = serde_json::from_str(line)
                .map_err(|e| CliError::usage(format!("line {}: corrupt chain record: {e}", i + 1)))?;
            chains.push(rec);
        }
        if chains.is_empty() {
            return Err(CliError::usage("ensemble file holds no chains"));
        }
        if chains.len() != header.config.b {
            return Err(CliError::usage(format!(
                "header promises {} chains, file holds {}",
                header.config.b,
                chains.len()
            )));
        }
        Ok(Self { header, chains })
    }

    pub fn densities(&self) -> Result<Vec<LogConcaveDensity>, CliError> {
        self.chains.iter().map(|c| c.fit.to_density()).collect()
    }
}

pub fn parse_fit_file(text: &str) -> Result<FitFile, CliError> {
    parse_versioned(text, "fit", 1)
}

fn parse_versioned<T: for<'de> Deserialize<'de>>(
    text: &str,
    kind: &str,
    line: usize,
) -> Result<T, CliError> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| CliError::usage(format!("line {line}: not JSON: {e}")))?;
    match v.get("kind").and_then(Value::as_str) {
        Some(k) if k == kind => {}
        other => {
            return Err(CliError::usage(format!(
                "expected a {kind} document, found kind {other:?}"
            )))
        }
    }
    match v.get("schema_version").and_then(Value::as_u64) {
        Some(s) if s == SCHEMA_VERSION as u64 => {}
        other => {
            return Err(CliError::usage(format!(
                "unsupported schema_version {other:?}"
            )))
        }
    }
    serde_json::from_value(v).map_err(|e| CliError::usage(format!("line {line}: {e}")))
}

pub fn bands_csv(t: &logcon::BandTable) -> String {
    let mut s = String::from("grid,lower,mean,upper\n");
    for i in 0..t.grid.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_float(t.grid[i]),
            fmt_float(t.lower[i]),
            fmt_float(t.mean[i]),
            fmt_float(t.upper[i])
        );
    }
    s
}

pub fn diagnostics_csv(chains: &[ChainRecord]) -> String {
    let mut s = String::from("chain,step,d\n");
    for c in chains {
        for (j, d) in c.diagnostics.sup_diffs.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", c.stream_id, j + 1, fmt_float(*d));
        }
    }
    s
}
