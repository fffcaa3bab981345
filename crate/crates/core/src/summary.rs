//! Pointwise summaries of a posterior ensemble.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::pwl::LogConcaveDensity;

/// Points in the default evaluation grid.
pub const DEFAULT_GRID_SIZE: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    #[default]
    Density,
    Log,
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Density => "density",
            Scale::Log => "log",
        })
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "density" => Ok(Scale::Density),
            "log" => Ok(Scale::Log),
            other => Err(invalid(format!("unknown scale {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandTable {
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub mean: Vec<f64>,
    pub upper: Vec<f64>,
    pub scale: Scale,
    pub alpha: f64,
}

/// `size` equispaced points strictly inside `[lo, hi]`:
/// `lo + (i + 1) (hi - lo) / (size + 1)`.
pub fn interior_grid(lo: f64, hi: f64, size: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(invalid(format!("bad grid range [{lo}, {hi}]")));
    }
    if size < 1 {
        return Err(invalid("grid needs at least one point"));
    }
    let step = (hi - lo) / (size + 1) as f64;
    Ok((0..size).map(|i| lo + (i + 1) as f64 * step).collect())
}

/// The default grid on the ensemble's common support.
pub fn default_grid(ensemble: &[LogConcaveDensity]) -> Result<Vec<f64>> {
    let first = ensemble.first().ok_or_else(|| invalid("empty ensemble"))?;
    let (lo, hi) = first.support();
    interior_grid(lo, hi, DEFAULT_GRID_SIZE)
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise `alpha/2` and `1 - alpha/2` quantiles and the mean of the
/// ensemble on `grid`.
pub fn pointwise_band(
    ensemble: &[LogConcaveDensity],
    grid: &[f64],
    alpha: f64,
    scale: Scale,
) -> Result<BandTable> {
    if ensemble.is_empty() {
        return Err(invalid("empty ensemble"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if grid.is_empty() {
        return Err(invalid("empty grid"));
    }
    for f in ensemble {
        let (lo, hi) = f.support();
        if let Some(x) = grid.iter().find(|&&x| !(x >= lo && x <= hi)) {
            return Err(invalid(format!(
                "grid point {x} lies outside the support [{lo}, {hi}]"
            )));
        }
    }
    let b = ensemble.len() as f64;
    let mut lower = Vec::with_capacity(grid.len());
    let mut mean = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    let mut column = vec![0.0; ensemble.len()];
    for &x in grid {
        for (v, f) in column.iter_mut().zip(ensemble) {
            *v = match scale {
                Scale::Density => f.density(x),
                Scale::Log => f.eval_log(x),
            };
        }
        column.sort_by(f64::total_cmp);
        lower.push(quantile_type7(&column, alpha / 2.0));
        upper.push(quantile_type7(&column, 1.0 - alpha / 2.0));
        let avg = column.iter().sum::<f64>() / b;
        // Rounding can push the average of near-equal values past the extremes.
        mean.push(avg.clamp(column[0], column[column.len() - 1]));
    }
    Ok(BandTable {
        grid: grid.to_vec(),
        lower,
        mean,
        upper,
        scale,
        alpha,
    })
}

/// Average band width on the density scale at `alpha = 0.1` over the
/// default grid.
pub fn ensemble_spread(ensemble: &[LogConcaveDensity]) -> Result<f64> {
    let grid = default_grid(ensemble)?;
    let t = pointwise_band(ensemble, &grid, 0.1, Scale::Density)?;
    Ok(t.upper.iter().zip(&t.lower).map(|(u, l)| u - l).sum::<f64>() / grid.len() as f64)
}

/// `(knot, log-density)` at knots where the log-density actually bends
/// (strict slope decrease), plus the two endpoints.
pub fn knot_report(f: &LogConcaveDensity) -> Vec<(f64, f64)> {
    let knots = f.knots();
    let values = f.log_values();
    let slopes = f.log_shape().slopes();
    let last = knots.len() - 1;
    (0..=last)
        .filter(|&j| j == 0 || j == last || slopes[j] < slopes[j - 1])
        .map(|j| (knots[j], values[j]))
        .collect()
}
