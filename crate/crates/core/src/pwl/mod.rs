//! Piecewise-linear functions on a closed interval and the exact calculus
//! of the piecewise-exponential densities they induce.
//!
//! Every function here is `-∞` outside `[t_1, t_k]`; that value only ever
//! appears as an evaluation result and is never stored.

mod density;
pub(crate) mod kernel;

pub use density::{normalize, LogConcaveDensity};
pub use kernel::{segment_exp_integral, SMALL_SLOPE_SWITCH};

use std::ops::Deref;

use crate::empirical::EmpiricalMeasure;
use crate::error::{invalid, Result};

/// Relative tolerance on slope increases accepted by [`PwlConcave::new`].
pub const CONCAVITY_TOL: f64 = 1e-10;

/// A continuous piecewise-linear function on `[knots[0], knots[k-1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(invalid(format!(
                "{} knots but {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots.len() < 2 {
            return Err(invalid("need at least two knots"));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(invalid("knots and values must be finite"));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("knots must be strictly increasing"));
        }
        Ok(Self { knots, values })
    }

    /// Constant function on `[lo, hi]`.
    pub fn constant(lo: f64, hi: f64, c: f64) -> Result<Self> {
        Self::new(vec![lo, hi], vec![c, c])
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn support(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, y)| (y[1] - y[0]) / (t[1] - t[0]))
            .collect()
    }

    /// Index `j` of the segment `[t_j, t_{j+1}]` containing `x`, which must
    /// lie in the support.
    pub(crate) fn segment_of(&self, x: f64) -> usize {
        let j = self.knots.partition_point(|&t| t <= x);
        j.saturating_sub(1).min(self.knots.len() - 2)
    }

    /// Linear interpolation on the support, `-∞` outside.
    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(lo..=hi).contains(&x) {
            return f64::NEG_INFINITY;
        }
        let j = self.segment_of(x);
        let (t0, t1) = (self.knots[j], self.knots[j + 1]);
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        if x == t1 {
            return y1;
        }
        let lambda = (x - t0) / (t1 - t0);
        y0 + lambda * (y1 - y0)
    }

    /// The same function with every value shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            knots: self.knots.clone(),
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }

    /// `∫ exp(self)` over the support.
    pub fn exp_integral(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, y)| (t[1] - t[0]) * kernel::unit_exp_integral(y[0], y[1]))
            .sum()
    }
}

/// A concave piecewise-linear function: the log of an unnormalized
/// log-concave density.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlConcave(PiecewiseLinear);

impl PwlConcave {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::from_pwl(PiecewiseLinear::new(knots, values)?)
    }

    pub fn from_pwl(pwl: PiecewiseLinear) -> Result<Self> {
        let slopes = pwl.slopes();
        for (j, w) in slopes.windows(2).enumerate() {
            let scale = 1f64.max(w[0].abs()).max(w[1].abs());
            if w[1] - w[0] > CONCAVITY_TOL * scale {
                return Err(invalid(format!(
                    "slope increases at knot {} ({} -> {})",
                    j + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Self(pwl))
    }

    pub fn as_pwl(&self) -> &PiecewiseLinear {
        &self.0
    }

    pub fn into_pwl(self) -> PiecewiseLinear {
        self.0
    }
}

impl Deref for PwlConcave {
    type Target = PiecewiseLinear;

    fn deref(&self) -> &PiecewiseLinear {
        &self.0
    }
}

/// Evaluate `f` at `x`; `-∞` outside its support.
pub fn eval_log(f: &PiecewiseLinear, x: f64) -> f64 {
    f.eval(x)
}

/// Exact `∫ g(x) f(x) dx` for piecewise-linear `g` and a log-concave density
/// `f`, integrating over the merged knot grid.
pub fn integrate_pwl_against(g: &PiecewiseLinear, f: &LogConcaveDensity) -> Result<f64> {
    let (flo, fhi) = f.support();
    let (glo, ghi) = g.support();
    if glo > flo || ghi < fhi {
        return Err(invalid(format!(
            "g is -inf on part of the density support: g on [{glo}, {ghi}], f on [{flo}, {fhi}]"
        )));
    }
    let fk = f.shape().knots();
    let fv = f.shape().values();
    let gk = g.knots();
    let mut total = 0.0;
    let mut gi = gk.partition_point(|&t| t <= flo);
    for j in 0..fk.len() - 1 {
        let (a, b) = (fk[j], fk[j + 1]);
        let slope = (fv[j + 1] - fv[j]) / (b - a);
        let mut left = a;
        let mut left_f = fv[j];
        let mut left_g = g.eval(a);
        loop {
            let (right, right_f) = if gi < gk.len() && gk[gi] < b {
                let t = gk[gi];
                gi += 1;
                (t, fv[j] + slope * (t - a))
            } else {
                (b, fv[j + 1])
            };
            let right_g = g.eval(right);
            let [m0, m1, _] = kernel::segment_moments(left_f, right_f);
            total += (right - left) * (left_g * (m0 - m1) + right_g * m1);
            if right == b {
                break;
            }
            left = right;
            left_f = right_f;
            left_g = right_g;
        }
        while gi < gk.len() && gk[gi] <= b {
            gi += 1;
        }
    }
    Ok(total)
}

/// `Σ_i w_i g(x_i)`.
pub fn integrate_pwl_against_empirical(g: &PiecewiseLinear, data: &EmpiricalMeasure) -> Result<f64> {
    let (lo, hi) = g.support();
    let mut total = 0.0;
    for (&x, &w) in data.points().iter().zip(data.weights()) {
        if !(lo..=hi).contains(&x) {
            return Err(invalid(format!(
                "support point {x} lies outside [{lo}, {hi}] where g is -inf"
            )));
        }
        total += w * g.eval(x);
    }
    Ok(total)
}

/// Log-likelihood objective `∫ g dF_n - ∫ exp(g) dx`.
pub fn loss(g: &PiecewiseLinear, data: &EmpiricalMeasure) -> Result<f64> {
    Ok(integrate_pwl_against_empirical(g, data)? - g.exp_integral())
}

/// `sup |g1 - g2|` over the common support. Exact: the difference is linear
/// between consecutive points of the union of both knot sets.
pub fn sup_diff(g1: &PiecewiseLinear, g2: &PiecewiseLinear) -> Result<f64> {
    if g1.support() != g2.support() {
        return Err(invalid(format!(
            "supports differ: {:?} vs {:?}",
            g1.support(),
            g2.support()
        )));
    }
    let (a, b) = (g1.knots(), g2.knots());
    let (mut i, mut j) = (0, 0);
    let mut best = 0.0f64;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&xa), Some(&xb)) if xa == xb => {
                i += 1;
                j += 1;
                xa
            }
            (Some(&xa), Some(&xb)) if xa < xb => {
                i += 1;
                xa
            }
            (Some(&xa), None) => {
                i += 1;
                xa
            }
            (_, Some(&xb)) => {
                j += 1;
                xb
            }
            (None, None) => unreachable!(),
        };
        best = best.max((g1.eval(x) - g2.eval(x)).abs());
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{quad, SplitMix};

    fn pwl(k: &[f64], v: &[f64]) -> PiecewiseLinear {
        PiecewiseLinear::new(k.to_vec(), v.to_vec()).unwrap()
    }

    pub(crate) fn random_concave(rng: &mut SplitMix, lo: f64, hi: f64, k: usize) -> PwlConcave {
        let mut knots: Vec<f64> = (0..k - 2).map(|_| rng.range(lo, hi)).collect();
        knots.push(lo);
        knots.push(hi);
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let mut slopes: Vec<f64> = (0..knots.len() - 1).map(|_| rng.range(-3.0, 3.0)).collect();
        slopes.sort_by(|a, b| b.total_cmp(a));
        let mut values = vec![rng.range(-1.0, 1.0)];
        for j in 0..slopes.len() {
            let last = values[j];
            values.push(last + slopes[j] * (knots[j + 1] - knots[j]));
        }
        PwlConcave::new(knots, values).unwrap()
    }

    #[test]
    fn eval_inside_and_outside() {
        let flat = pwl(&[0.0, 1.0], &[0.0, 0.0]);
        assert_eq!(eval_log(&flat, 0.5), 0.0);
        assert_eq!(eval_log(&flat, 2.0), f64::NEG_INFINITY);
        let ramp = pwl(&[0.0, 1.0], &[0.0, 1.0]);
        assert_eq!(eval_log(&ramp, 0.25), 0.25);
        assert_eq!(eval_log(&ramp, 1.0), 1.0);
    }

    #[test]
    fn construction_errors() {
        assert!(PiecewiseLinear::new(vec![0.0], vec![0.0]).is_err());
        assert!(PiecewiseLinear::new(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
        assert!(PiecewiseLinear::new(vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(PiecewiseLinear::new(vec![0.0, 1.0], vec![0.0, f64::NAN]).is_err());
        assert!(PwlConcave::new(vec![0.0, 1.0, 2.0], vec![0.0, -1.0, 0.0]).is_err());
        assert!(PwlConcave::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn integrate_against_density() {
        let uniform = normalize(&PwlConcave::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap());
        let one = PiecewiseLinear::constant(0.0, 1.0, 1.0).unwrap();
        assert!((integrate_pwl_against(&one, &uniform).unwrap() - 1.0).abs() < 1e-15);
        let id = pwl(&[0.0, 1.0], &[0.0, 1.0]);
        assert!((integrate_pwl_against(&id, &uniform).unwrap() - 0.5).abs() < 1e-15);

        let f = normalize(&PwlConcave::new(vec![-1.0, 0.4, 2.0], vec![-0.5, 0.3, -1.2]).unwrap());
        let g = pwl(&[-2.0, 0.0, 1.5, 2.5], &[1.0, -2.0, 3.0, 0.5]);
        let exact = integrate_pwl_against(&g, &f).unwrap();
        let q = quad(|x| g.eval(x) * f.density(x), -1.0, 0.0)
            + quad(|x| g.eval(x) * f.density(x), 0.0, 0.4)
            + quad(|x| g.eval(x) * f.density(x), 0.4, 1.5)
            + quad(|x| g.eval(x) * f.density(x), 1.5, 2.0);
        let short = pwl(&[-2.0, 0.0, 1.5], &[1.0, -2.0, 3.0]);
        assert!(integrate_pwl_against(&short, &f).is_err());
        assert!((exact - q).abs() < 1e-9 * q.abs().max(1.0), "{exact} vs {q}");

    }

    #[test]
    fn integrate_against_empirical() {
        let data = EmpiricalMeasure::from_samples(&[0.0, 1.0]).unwrap();
        let c = PiecewiseLinear::constant(0.0, 1.0, 3.5).unwrap();
        assert_eq!(integrate_pwl_against_empirical(&c, &data).unwrap(), 3.5);
        let id = pwl(&[0.0, 1.0], &[0.0, 1.0]);
        assert_eq!(integrate_pwl_against_empirical(&id, &data).unwrap(), 0.5);

        let mut rng = SplitMix(11);
        let xs: Vec<f64> = (0..10).map(|_| rng.range(0.0, 1.0)).collect();
        let data = EmpiricalMeasure::from_samples(&xs).unwrap();
        let g = random_concave(&mut rng, -0.1, 1.1, 5);
        let direct: f64 = xs.iter().map(|&x| g.eval(x)).sum::<f64>() / 10.0;
        let got = integrate_pwl_against_empirical(&g, &data).unwrap();
        assert!((got - direct).abs() < 1e-14);

        let outside = EmpiricalMeasure::from_samples(&[0.5, 2.0]).unwrap();
        assert!(integrate_pwl_against_empirical(&id, &outside).is_err());
    }

    #[test]
    fn loss_values() {
        let data = EmpiricalMeasure::from_samples(&[0.0, 1.0]).unwrap();
        let g = PiecewiseLinear::constant(0.0, 1.0, 0.0).unwrap();
        assert!((loss(&g, &data).unwrap() + 1.0).abs() < 1e-15);

        let mut rng = SplitMix(5);
        let xs: Vec<f64> = (0..5).map(|_| rng.range(0.0, 2.0)).collect();
        let data = EmpiricalMeasure::from_samples(&xs).unwrap();
        let g = random_concave(&mut rng, -0.5, 2.5, 4);
        let sum: f64 = xs.iter().map(|&x| g.eval(x)).sum::<f64>() / 5.0;
        let mass: f64 = g
            .knots()
            .windows(2)
            .map(|t| quad(|x| g.eval(x).exp(), t[0], t[1]))
            .sum();
        let got = loss(&g, &data).unwrap();
        assert!((got - (sum - mass)).abs() < 1e-10);

        let f = normalize(&g);
        let got = loss(f.shape(), &data).unwrap();
        let lin = integrate_pwl_against_empirical(f.shape(), &data).unwrap();
        assert!((got - (lin - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn sup_diff_cases() {
        let mut rng = SplitMix(3);
        let g1 = random_concave(&mut rng, 0.0, 1.0, 6);
        assert_eq!(sup_diff(&g1, &g1).unwrap(), 0.0);
        let shifted = g1.shifted(-0.75);
        assert!((sup_diff(&g1, &shifted).unwrap() - 0.75).abs() < 1e-14);

        // Knots on the 1e-5 grid so the grid maximum is attained exactly.
        let on_grid = |rng: &mut SplitMix, k: usize| {
            let mut idx: Vec<u64> = (0..k - 2).map(|_| 1 + rng.next_u64() % 99_999).collect();
            idx.extend([0, 100_000]);
            idx.sort_unstable();
            idx.dedup();
            let knots: Vec<f64> = idx.iter().map(|&i| i as f64 / 100_000.0).collect();
            let vals: Vec<f64> = knots.iter().map(|&x| -4.0 * (x - 0.3).powi(2) + rng.range(-1e-3, 1e-3)).collect();
            PiecewiseLinear::new(knots, vals).unwrap()
        };
        let (h1, h2) = (on_grid(&mut rng, 8), on_grid(&mut rng, 9));
        let exact = sup_diff(&h1, &h2).unwrap();
        let grid = (0..=100_000)
            .map(|i| i as f64 / 100_000.0)
            .map(|x| (h1.eval(x) - h2.eval(x)).abs())
            .fold(0.0f64, f64::max);
        assert!((exact - grid).abs() < 1e-9, "{exact} vs {grid}");

        let other = PiecewiseLinear::constant(0.0, 2.0, 0.0).unwrap();
        assert!(sup_diff(&g1, &other).is_err());
    }
}
