//! Command-line front end for `logcon`.
//!
//! ```text
//! logcon simulate  --dist normal(0,1) --n 70 --seed 1 --output data.txt
//! logcon fit       --input data.txt --output fit.json
//! logcon posterior --input data.txt --b 50 --draws 1000 --seed 1 --output ens.jsonl
//! logcon bands     --input ens.jsonl --alpha 0.1 --grid 512 --scale density --output bands.csv
//! logcon diagnose  --input ens.jsonl --output diag.csv
//! ```
//!
//! Exit codes: 0 success, 2 usage or parse error, 3 degenerate data,
//! 4 solver failure, 1 for I/O failures while writing.

pub mod format;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use logcon::summary::interior_grid;
use logcon::{
    fit, pointwise_band, run_ensemble, verify_kkt, EmpiricalMeasure, Family, FitOptions, Scale,
    StopRule,
};

use format::{
    bands_csv, diagnostics_csv, write_data, ChainRecord, DiagnosticsRecord, EnsembleFile,
    EnsembleHeader, FitConfig, FitFile, FitRecord, KktRecord, PosteriorConfig, RuleConfig,
    LIBRARY_VERSION, SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<logcon::Error> for CliError {
    fn from(e: logcon::Error) -> Self {
        let code = match e {
            logcon::Error::InvalidArgument(_) => 2,
            logcon::Error::DegenerateSample { .. } => 3,
            logcon::Error::ConvergenceFailure { .. } => 4,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "logcon", version, about = "Log-concave density estimation with martingale-posterior bands")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic sample, one value per line.
    Simulate(SimulateArgs),
    /// Fit the log-concave maximum-likelihood density.
    Fit(FitArgs),
    /// Run predictive-resampling chains and write the ensemble.
    Posterior(PosteriorArgs),
    /// Pointwise bands of an ensemble as CSV.
    Bands(BandsArgs),
    /// Per-step sup-distances of an ensemble as CSV.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// normal(mu,sigma), exponential(rate), laplace(mu,b) or gamma(shape,scale)
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PosteriorArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Number of chains.
    #[arg(long, default_value_t = 50)]
    pub b: usize,
    /// Total sample size at which chains stop (the cap in adaptive mode).
    #[arg(long, conflicts_with = "draws")]
    pub m: Option<u64>,
    /// Observations appended per chain; used when --m is absent.
    #[arg(long)]
    pub draws: Option<u64>,
    #[arg(long, requires = "adaptive_window")]
    pub adaptive_eps: Option<f64>,
    #[arg(long, requires = "adaptive_eps")]
    pub adaptive_window: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BandsArgs {
    /// Ensemble file written by `posterior`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Number of grid points strictly inside the data range.
    #[arg(long, default_value_t = logcon::summary::DEFAULT_GRID_SIZE)]
    pub grid: usize,
    #[arg(long, default_value = "density", value_parser = ["density", "log"])]
    pub scale: String,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub const DEFAULT_DRAWS: u64 = 1000;

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate(a) => simulate(&a),
        Command::Fit(a) => fit_command(&a),
        Command::Posterior(a) => posterior(&a),
        Command::Bands(a) => bands(&a),
        Command::Diagnose(a) => diagnose(&a),
    }
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn emit(path: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(format!("stdout: {e}"))),
    }
}

fn load_sample(path: &PathBuf) -> Result<EmpiricalMeasure, CliError> {
    let xs = format::parse_data(&read(path)?)?;
    if xs.is_empty() {
        return Err(logcon::Error::DegenerateSample { distinct: 0 }.into());
    }
    Ok(EmpiricalMeasure::from_samples(&xs)?)
}

fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let family: Family = a.dist.parse()?;
    if a.n < 2 {
        return Err(CliError::usage("--n must be at least 2"));
    }
    emit(a.output.as_ref(), &write_data(&family.sample(a.n, a.seed)?))
}

fn fit_command(a: &FitArgs) -> Result<(), CliError> {
    let data = load_sample(&a.input)?;
    let opts = FitOptions::default();
    let f = fit(&data, &opts)?;
    let report = verify_kkt(&f, &data, opts.tol);
    let doc = FitFile {
        schema_version: SCHEMA_VERSION,
        kind: "fit".into(),
        library_version: LIBRARY_VERSION.into(),
        config: FitConfig {
            input: a.input.display().to_string(),
            n: data.sample_size().unwrap_or(0),
            distinct: data.len(),
            tol: opts.tol,
            max_iter: opts.max_iter,
        },
        fit: FitRecord::from_density(&f),
        kkt: KktRecord::new(&report, opts.tol, data.max() - data.min()),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("fit serializes");
    text.push('\n');
    emit(a.output.as_ref(), &text)
}

/// Resolve the stop rule flags against a sample of size `n`.
pub fn resolve_rule(a: &PosteriorArgs, n: u64) -> Result<(StopRule, RuleConfig), CliError> {
    let total = match (a.m, a.draws) {
        (Some(m), _) => m,
        (None, d) => n + d.unwrap_or(DEFAULT_DRAWS),
    };
    match (a.adaptive_eps, a.adaptive_window) {
        (Some(epsilon), Some(window)) => {
            let rule = StopRule::adaptive(epsilon, window, total)?;
            Ok((
                rule,
                RuleConfig::Adaptive {
                    epsilon,
                    window,
                    m_max: total,
                },
            ))
        }
        _ => {
            if total < n {
                return Err(CliError::usage(format!(
                    "--m {total} is smaller than the sample size {n}"
                )));
            }
            Ok((StopRule::fixed(total)?, RuleConfig::Fixed { m: total }))
        }
    }
}

fn posterior(a: &PosteriorArgs) -> Result<(), CliError> {
    let data = load_sample(&a.input)?;
    if data.len() < 2 {
        return Err(logcon::Error::DegenerateSample { distinct: data.len() }.into());
    }
    let n = data.sample_size().unwrap_or(0);
    if a.b < 1 {
        return Err(CliError::usage("--b must be at least 1"));
    }
    if a.parallelism < 1 {
        return Err(CliError::usage("--parallelism must be at least 1"));
    }
    let (rule, rule_cfg) = resolve_rule(a, n)?;
    let ens = run_ensemble(&data, &rule, a.b, a.seed, a.parallelism)?;
    let file = EnsembleFile {
        header: EnsembleHeader {
            schema_version: SCHEMA_VERSION,
            kind: "ensemble".into(),
            library_version: LIBRARY_VERSION.into(),
            config: PosteriorConfig {
                input: a.input.display().to_string(),
                n,
                b: a.b,
                rule: rule_cfg,
                seed: a.seed,
                parallelism: a.parallelism,
            },
        },
        chains: ens
            .fits
            .iter()
            .zip(&ens.diagnostics)
            .zip(&ens.stream_ids)
            .map(|((f, d), &id)| ChainRecord {
                stream_id: id,
                fit: FitRecord::from_density(f),
                diagnostics: DiagnosticsRecord::new(d),
            })
            .collect(),
    };
    let flagged = ens.flagged_chains();
    if !flagged.is_empty() {
        eprintln!("warning: chains with solver failures above 1%: {flagged:?}");
    }
    emit(a.output.as_ref(), &file.to_jsonl())
}

fn bands(a: &BandsArgs) -> Result<(), CliError> {
    let ens = EnsembleFile::parse(&read(&a.input)?)?;
    let fits = ens.densities()?;
    let scale: Scale = a.scale.parse()?;
    let (lo, hi) = fits[0].support();
    let grid = interior_grid(lo, hi, a.grid)?;
    let table = pointwise_band(&fits, &grid, a.alpha, scale)?;
    emit(a.output.as_ref(), &bands_csv(&table))
}

fn diagnose(a: &DiagnoseArgs) -> Result<(), CliError> {
    let ens = EnsembleFile::parse(&read(&a.input)?)?;
    emit(a.output.as_ref(), &diagnostics_csv(&ens.chains))?;
    let mut worst: f64 = 0.0;
    for c in &ens.chains {
        let d = &c.diagnostics;
        let last = d.sup_diffs.last().copied().unwrap_or(0.0);
        worst = worst.max(last);
        eprintln!(
            "chain {}: steps {}, terminal d {}, solver failures {}{}",
            c.stream_id,
            d.sup_diffs.len(),
            format::fmt_float(last),
            d.solver_failures,
            if d.flagged { " (flagged)" } else { "" }
        );
    }
    eprintln!(
        "{} chains, largest terminal d {}",
        ens.chains.len(),
        format::fmt_float(worst)
    );
    Ok(())
}
