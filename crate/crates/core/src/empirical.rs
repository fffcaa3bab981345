use crate::error::{invalid, Result};

/// A discrete probability measure on strictly increasing support points.
///
/// Exact duplicates are merged into the weight of a single point. Measures
/// built from raw samples also remember the multiplicity of each point.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<f64>,
    weights: Vec<f64>,
    counts: Option<Vec<u64>>,
}

impl EmpiricalMeasure {
    /// Equal-weight measure of a raw sample.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("empty sample"));
        }
        if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
            return Err(invalid(format!("non-finite sample value {bad}")));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut points = Vec::with_capacity(sorted.len());
        let mut counts: Vec<u64> = Vec::with_capacity(sorted.len());
        for x in sorted {
            match points.last() {
                Some(&last) if last == x => *counts.last_mut().unwrap() += 1,
                _ => {
                    points.push(x);
                    counts.push(1);
                }
            }
        }
        Ok(Self::from_counts(points, &counts))
    }

    /// Weighted measure; weights are rescaled to sum to one.
    pub fn from_weighted(points: &[f64], weights: &[f64]) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(invalid("points and weights differ in length"));
        }
        if points.is_empty() {
            return Err(invalid("empty sample"));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(invalid("non-finite support point"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(invalid("weights must be finite and positive"));
        }
        let mut pairs: Vec<(f64, f64)> = points.iter().copied().zip(weights.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        let total: f64 = merged.iter().map(|p| p.1).sum();
        Ok(Self {
            points: merged.iter().map(|p| p.0).collect(),
            weights: merged.iter().map(|p| p.1 / total).collect(),
            counts: None,
        })
    }

    /// Measure with weights `count / Σ counts`. `points` must already be
    /// strictly increasing.
    pub(crate) fn from_counts(points: Vec<f64>, counts: &[u64]) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0] < w[1]));
        let n: u64 = counts.iter().sum();
        let weights = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Self {
            points,
            weights,
            counts: Some(counts.to_vec()),
        }
    }

    /// Multiplicities, when the measure came from a raw sample.
    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    /// Number of observations (with ties), when known.
    pub fn sample_size(&self) -> Option<u64> {
        self.counts.as_ref().map(|c| c.iter().sum())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of distinct support points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    /// Right-continuous distribution function `F_n(x) = Σ_{x_i <= x} w_i`.
    pub fn cdf(&self, x: f64) -> f64 {
        let j = self.points.partition_point(|&p| p <= x);
        self.weights[..j].iter().sum::<f64>().min(1.0)
    }

    /// Kish effective sample size `1 / Σ w_i²`; equals `n` for an
    /// unweighted sample without ties.
    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}
