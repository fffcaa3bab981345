//! Predictive-resampling chains.
//!
//! A chain starts from the NPMLE of the observed data, then repeatedly
//! draws one new observation from its current estimate, appends it to the
//! sample and refits. The estimate reached when the chain stops is one draw
//! from the martingale posterior; [`run_ensemble`] collects `B` of them from
//! independent streams.

use rayon::prelude::*;

use crate::empirical::EmpiricalMeasure;
use crate::error::{invalid, Error, Result};
use crate::npmle::{fit, FitOptions};
use crate::pwl::{
    integrate_pwl_against, integrate_pwl_against_empirical, sup_diff, LogConcaveDensity,
    PiecewiseLinear, PwlConcave,
};
use crate::sampler::{derive_stream, draw, RngStream};

/// Chains whose refits fail more often than this are flagged.
pub const FAILURE_FLAG_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Run until the sample holds `total` observations.
    Fixed { total: u64 },
    /// Stop once `window` consecutive sup-distances are `<= epsilon`, or
    /// when the sample reaches `max_total` observations.
    Adaptive {
        epsilon: f64,
        window: usize,
        max_total: u64,
    },
}

impl StopRule {
    pub fn fixed(total: u64) -> Result<Self> {
        let rule = StopRule::Fixed { total };
        rule.validate()?;
        Ok(rule)
    }

    /// Fixed rule appending exactly `draws` observations to `sample_size`.
    pub fn appended(sample_size: u64, draws: u64) -> Result<Self> {
        Self::fixed(sample_size + draws)
    }

    pub fn adaptive(epsilon: f64, window: usize, max_total: u64) -> Result<Self> {
        let rule = StopRule::Adaptive {
            epsilon,
            window,
            max_total,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StopRule::Fixed { total } if total < 1 => Err(invalid("M must be at least 1")),
            StopRule::Adaptive {
                epsilon,
                window,
                max_total,
            } => {
                if !(epsilon > 0.0 && epsilon.is_finite()) {
                    Err(invalid("adaptive epsilon must be positive"))
                } else if window < 1 {
                    Err(invalid("adaptive window must be at least 1"))
                } else if max_total < window as u64 {
                    Err(invalid("maximum sample size must be at least the window"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn cap(&self) -> u64 {
        match *self {
            StopRule::Fixed { total } => total,
            StopRule::Adaptive { max_total, .. } => max_total,
        }
    }
}

/// Per-chain record of the sup-distances between successive log-density
/// estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDiagnostics {
    /// `sup |φ̂_n - φ̂_{n-1}|`, one entry per appended draw.
    pub sup_diffs: Vec<f64>,
    pub solver_failures: usize,
    /// Sample size when the chain stopped.
    pub stopped_at: u64,
    /// Size of the observed sample the chain started from.
    pub initial_size: u64,
}

impl ChainDiagnostics {
    pub fn steps(&self) -> usize {
        self.sup_diffs.len()
    }

    pub fn terminal_diff(&self) -> Option<f64> {
        self.sup_diffs.last().copied()
    }

    pub fn failure_rate(&self) -> f64 {
        if self.sup_diffs.is_empty() {
            0.0
        } else {
            self.solver_failures as f64 / self.sup_diffs.len() as f64
        }
    }

    pub fn flagged(&self) -> bool {
        self.failure_rate() > FAILURE_FLAG_RATE
    }
}

/// Outcome of one predictive-resampling step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub draw: f64,
    pub sup_diff: f64,
    pub solver_failed: bool,
}

/// One chain: the augmented sample, its current estimate and its stream.
#[derive(Debug, Clone)]
pub struct ChainState {
    points: Vec<f64>,
    counts: Vec<u64>,
    sample: EmpiricalMeasure,
    fit: LogConcaveDensity,
    n: u64,
    rng: RngStream,
    opts: FitOptions,
}

impl ChainState {
    /// Start a chain at the NPMLE of `data`, which must carry
    /// multiplicities (see [`EmpiricalMeasure::sample_size`]).
    pub fn new(data: &EmpiricalMeasure, rng: RngStream) -> Result<Self> {
        let opts = FitOptions::default();
        let initial = match fit(data, &opts) {
            Ok(f) => f,
            Err(Error::ConvergenceFailure { last, .. }) => *last,
            Err(e) => return Err(e),
        };
        Self::with_fit(data, initial, rng)
    }

    /// Start a chain from a precomputed estimate of `data`.
    pub fn with_fit(data: &EmpiricalMeasure, fit: LogConcaveDensity, rng: RngStream) -> Result<Self> {
        let counts = data
            .counts()
            .ok_or_else(|| invalid("predictive resampling needs an unweighted sample"))?
            .to_vec();
        if fit.support() != (data.min(), data.max()) {
            return Err(invalid("initial estimate support differs from the data range"));
        }
        Ok(Self {
            points: data.points().to_vec(),
            n: counts.iter().sum(),
            counts,
            sample: data.clone(),
            fit,
            rng,
            opts: FitOptions::default(),
        })
    }

    pub fn sample(&self) -> &EmpiricalMeasure {
        &self.sample
    }

    pub fn fit(&self) -> &LogConcaveDensity {
        &self.fit
    }

    /// Current number of observations, counting ties.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn rng(&self) -> &RngStream {
        &self.rng
    }

    /// Draw from the current estimate, append, and refit from the previous
    /// shape.
    pub fn step(&mut self) -> StepRecord {
        let x = draw(&self.fit, &mut self.rng);
        match self.points.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => self.counts[i] += 1,
            Err(i) => {
                self.points.insert(i, x);
                self.counts.insert(i, 1);
            }
        }
        self.n += 1;
        self.sample = EmpiricalMeasure::from_counts(self.points.clone(), &self.counts);
        let opts = self.opts.clone().with_warm_start(self.fit.shape().clone());
        let (next, failed) = match fit(&self.sample, &opts) {
            Ok(f) => (f, false),
            Err(Error::ConvergenceFailure { last, .. }) => (*last, true),
            // Unreachable for a sample with at least two distinct points.
            Err(e) => panic!("refit failed: {e}"),
        };
        let d = sup_diff(next.log_shape(), self.fit.log_shape())
            .expect("chain estimates share the data range as support");
        self.fit = next;
        StepRecord {
            draw: x,
            sup_diff: d,
            solver_failed: failed,
        }
    }
}

/// Run one chain under `rule` and return its terminal estimate.
pub fn run_chain(
    data: &EmpiricalMeasure,
    rule: &StopRule,
    rng: RngStream,
) -> Result<(LogConcaveDensity, ChainDiagnostics)> {
    rule.validate()?;
    let state = ChainState::new(data, rng)?;
    drive(state, rule)
}

fn drive(mut state: ChainState, rule: &StopRule) -> Result<(LogConcaveDensity, ChainDiagnostics)> {
    let initial_size = state.n;
    if let StopRule::Fixed { total } = *rule {
        if total < initial_size {
            return Err(invalid(format!(
                "M = {total} is smaller than the sample size {initial_size}"
            )));
        }
    }
    let cap = rule.cap();
    let mut diag = ChainDiagnostics {
        sup_diffs: Vec::with_capacity(cap.saturating_sub(initial_size) as usize),
        solver_failures: 0,
        stopped_at: initial_size,
        initial_size,
    };
    let mut calm = 0usize;
    while state.n < cap {
        let rec = state.step();
        diag.sup_diffs.push(rec.sup_diff);
        diag.solver_failures += rec.solver_failed as usize;
        if let StopRule::Adaptive { epsilon, window, .. } = *rule {
            calm = if rec.sup_diff <= epsilon { calm + 1 } else { 0 };
            if calm >= window {
                break;
            }
        }
    }
    diag.stopped_at = state.n;
    Ok((state.fit, diag))
}

/// `B` terminal estimates from independent chains.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEnsemble {
    pub fits: Vec<LogConcaveDensity>,
    pub diagnostics: Vec<ChainDiagnostics>,
    /// Stream id of each chain, in the order of `fits`.
    pub stream_ids: Vec<u64>,
    pub base_seed: u64,
    pub rule: StopRule,
}

impl PosteriorEnsemble {
    pub fn len(&self) -> usize {
        self.fits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fits.is_empty()
    }

    /// Indices of chains whose solver failure rate exceeds
    /// [`FAILURE_FLAG_RATE`].
    pub fn flagged_chains(&self) -> Vec<usize> {
        self.diagnostics
            .iter()
            .enumerate()
            .filter(|(_, d)| d.flagged())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Run `b` chains; chain `l` (1-based) uses `derive_stream(base_seed, l)`.
/// The result does not depend on `parallelism`.
pub fn run_ensemble(
    data: &EmpiricalMeasure,
    rule: &StopRule,
    b: usize,
    base_seed: u64,
    parallelism: usize,
) -> Result<PosteriorEnsemble> {
    if b < 1 {
        return Err(invalid("B must be at least 1"));
    }
    if parallelism < 1 {
        return Err(invalid("parallelism must be at least 1"));
    }
    rule.validate()?;
    let start = ChainState::new(data, derive_stream(base_seed, 0))?;
    let initial = start.fit().clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    let stream_ids: Vec<u64> = (1..=b as u64).collect();
    let chains: Vec<Result<(LogConcaveDensity, ChainDiagnostics)>> = pool.install(|| {
        stream_ids
            .par_iter()
            .map(|&l| {
                let state = ChainState::with_fit(data, initial.clone(), derive_stream(base_seed, l))?;
                drive(state, rule)
            })
            .collect()
    });
    let mut fits = Vec::with_capacity(b);
    let mut diagnostics = Vec::with_capacity(b);
    for chain in chains {
        let (f, d) = chain?;
        fits.push(f);
        diagnostics.push(d);
    }
    Ok(PosteriorEnsemble {
        fits,
        diagnostics,
        stream_ids,
        base_seed,
        rule: *rule,
    })
}

/// `∫ g dF̂_n - ∫ g dF_n` for the chain's current estimate and sample.
/// Non-negative (up to solver tolerance) for every concave `g`.
pub fn submartingale_gap(g: &PwlConcave, state: &ChainState) -> Result<f64> {
    Ok(integrate_pwl_against(g, &state.fit)? - integrate_pwl_against_empirical(g, &state.sample)?)
}

/// Monte Carlo check of the one-step predictive identity
/// `E[∫g dF_{n+1} | X_{1:n}] = n/(n+1) ∫g dF_n + 1/(n+1) ∫g dF̂_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveCheck {
    /// `|Monte Carlo average - closed form|`.
    pub deviation: f64,
    /// Sample standard deviation of the Monte Carlo terms.
    pub sigma_hat: f64,
    pub trials: usize,
}

impl PredictiveCheck {
    /// Half-width `4 σ̂ / √trials` of the acceptance band.
    pub fn band(&self) -> f64 {
        4.0 * self.sigma_hat / (self.trials as f64).sqrt()
    }

    pub fn within_band(&self) -> bool {
        self.deviation <= self.band()
    }
}

/// Draws `trials` candidate next observations from a copy of the chain's
/// stream (the chain itself is not advanced).
pub fn predictive_identity_check(
    g: &PiecewiseLinear,
    state: &ChainState,
    trials: usize,
) -> Result<PredictiveCheck> {
    if trials < 1 {
        return Err(invalid("trials must be at least 1"));
    }
    let (lo, hi) = state.fit.support();
    if g.support().0 > lo || g.support().1 < hi {
        return Err(invalid("g must be finite on the estimate's support"));
    }
    let model = integrate_pwl_against(g, &state.fit)?;
    let n = state.n as f64;
    let mut rng = state.rng.clone();
    // Each term is (n ∫g dF_n + g(X)) / (n + 1); the ∫g dF_n parts cancel
    // against the closed form.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 1..=trials {
        let v = g.eval(draw(&state.fit, &mut rng));
        let delta = v - mean;
        mean += delta / k as f64;
        m2 += delta * (v - mean);
    }
    let sd = if trials > 1 {
        (m2 / (trials - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(PredictiveCheck {
        deviation: (mean - model).abs() / (n + 1.0),
        sigma_hat: sd / (n + 1.0),
        trials,
    })
}
