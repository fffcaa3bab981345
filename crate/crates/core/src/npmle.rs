//! Log-concave nonparametric maximum-likelihood estimation.
//!
//! The estimate maximizes `Σ w_i φ(x_i) - ∫ exp φ` over concave `φ`. The
//! maximizer is linear between consecutive data points and `-∞` outside the
//! data range, so it is determined by its values at a subset of the data
//! points (its knots). The solver is an active-set method over that knot
//! subset:
//!
//! 1. For a fixed knot set, maximize the objective over the values at the
//!    knots with damped Newton steps. The objective is strictly concave in
//!    those values and the Hessian is tridiagonal.
//! 2. If the restricted optimum is not concave, move from the current
//!    concave iterate toward it until the first kink flattens and drop that
//!    knot.
//! 3. Otherwise compute, for every data point, the directional derivative
//!    of the objective along the hinge `min(x - t, 0)` and activate the
//!    data point with the largest positive derivative as a new knot.
//!
//! The loop ends when no hinge has a positive derivative, which is exactly
//! the first-order characterization of the maximizer.

use std::collections::HashSet;

use crate::empirical::EmpiricalMeasure;
use crate::error::{invalid, Error, Result};
use crate::pwl::kernel::{segment_moments, unit_exp_integral};
use crate::pwl::{normalize, LogConcaveDensity, PwlConcave};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;

/// Hinge derivatives below this fraction of the data range are treated as
/// zero when choosing the next knot.
const ACTIVATION_EPS: f64 = 1e-12;
/// Relative size under which a kink is considered flat.
const FLAT_KINK: f64 = 1e-12;
const NEWTON_MAX_STEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Tolerance for the optimality certificate. Hinge violations and the
    /// mean gap are compared against `tol` times the data range, mass error
    /// and the sandwich bounds against `tol` itself.
    pub tol: f64,
    /// Maximum number of active-set iterations.
    pub max_iter: usize,
    /// Previous solution to start from. Knots that are not data points are
    /// dropped; it is ignored entirely if its support differs from the data
    /// range.
    pub warm_start: Option<PwlConcave>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            warm_start: None,
        }
    }
}

impl FitOptions {
    pub fn with_warm_start(mut self, shape: PwlConcave) -> Self {
        self.warm_start = Some(shape);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Optimality certificate for a candidate estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Largest positive value of `∫Δ dF_n - ∫Δ f` over the hinges
    /// `Δ(x) = min(x - t, 0)` and `min(t - x, 0)`; zero when none is positive.
    pub max_hinge_violation: f64,
    /// `F̂(t) >= F_n(t-) - tol` at every knot `t`.
    pub sandwich_lower_ok: bool,
    /// `F̂(t) <= F_n(t) + tol` at every knot `t`.
    pub sandwich_upper_ok: bool,
    /// `|∫ f - 1|`.
    pub mass_error: f64,
    /// `∫ x f(x) dx - Σ w_i x_i`.
    pub mean_gap: f64,
}

impl KktReport {
    /// Whether every check passes at `tol`, with hinge and mean tolerances
    /// scaled by `scale` (the data range).
    pub fn certifies(&self, tol: f64, scale: f64) -> bool {
        let s = scale.max(1.0);
        self.max_hinge_violation <= tol * s
            && self.mean_gap.abs() <= tol * s
            && self.mass_error <= tol
            && self.sandwich_lower_ok
            && self.sandwich_upper_ok
    }
}

/// Compute the log-concave NPMLE of `data`.
pub fn fit(data: &EmpiricalMeasure, opts: &FitOptions) -> Result<LogConcaveDensity> {
    opts.validate()?;
    if data.len() < 2 {
        return Err(Error::DegenerateSample {
            distinct: data.len(),
        });
    }
    let mut solver = ActiveSet::new(data, opts.warm_start.as_ref());
    let iterations = solver.run(opts.max_iter);
    let shape = solver.shape()?;
    let density = normalize(&shape);
    let report = verify_kkt(&density, data, opts.tol);
    if report.certifies(opts.tol, data.max() - data.min()) {
        Ok(density)
    } else {
        Err(Error::ConvergenceFailure {
            iterations,
            last: Box::new(density),
            report,
        })
    }
}

/// Check the first-order optimality conditions of `f` as the NPMLE of
/// `data`, together with the CDF sandwich at the knots of `f`.
pub fn verify_kkt(f: &LogConcaveDensity, data: &EmpiricalMeasure, tol: f64) -> KktReport {
    let fk = f.knots();
    let (flo, fhi) = f.support();

    // Merged abscissas: data points and knots of f.
    let mut grid: Vec<f64> = data.points().iter().chain(fk).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let pts = data.points();
    let wts = data.weights();
    let mut di = 0;
    // Running values at the current abscissa.
    let mut f_hat = 0.0; // F̂(t)
    let mut g_hat = 0.0; // ∫ F̂ up to t
    let mut f_emp = 0.0; // F_n(t-)
    let mut g_emp = 0.0; // ∫ F_n up to t
    let mut hinge = Vec::with_capacity(grid.len());
    let mut lower_ok = true;
    let mut upper_ok = true;
    let mut prev = grid[0];
    let mut prev_log = f.eval_log(prev);
    let mut f_emp_right = 0.0;
    for &t in &grid {
        if t > prev {
            let d = t - prev;
            let log_t = f.eval_log(t);
            g_emp += d * f_emp_right;
            if prev >= flo && t <= fhi {
                let [m0, m1, _] = segment_moments(prev_log, log_t);
                g_hat += d * f_hat + d * d * (m0 - m1);
                f_hat += d * m0;
            } else {
                g_hat += d * f_hat;
            }
            prev = t;
            prev_log = log_t;
            f_emp = f_emp_right;
        }
        let mut atom = 0.0;
        if di < pts.len() && pts[di] == t {
            atom = wts[di];
            di += 1;
        }
        f_emp_right = f_emp + atom;
        hinge.push(g_hat - g_emp);
        if fk.binary_search_by(|k| k.total_cmp(&t)).is_ok() {
            let fhat_t = if t >= fhi { f.total_mass() } else { f_hat };
            lower_ok &= fhat_t >= f_emp - tol;
            upper_ok &= fhat_t <= f_emp_right + tol;
        }
    }
    let end = *hinge.last().unwrap();
    let max_hinge = hinge
        .iter()
        .map(|h| h.max(h - end))
        .fold(0.0f64, f64::max);

    KktReport {
        max_hinge_violation: max_hinge,
        sandwich_lower_ok: lower_ok,
        sandwich_upper_ok: upper_ok,
        mass_error: (f.total_mass() - 1.0).abs(),
        mean_gap: f.mean() - data.mean(),
    }
}

/// Active-set state: knot indices into the data and log-density values at
/// those knots.
struct ActiveSet<'a> {
    x: &'a [f64],
    w: &'a [f64],
    knots: Vec<usize>,
    vals: Vec<f64>,
}

impl<'a> ActiveSet<'a> {
    fn new(data: &'a EmpiricalMeasure, warm: Option<&PwlConcave>) -> Self {
        let x = data.points();
        let m = x.len();
        let mut set = Self {
            x,
            w: data.weights(),
            knots: vec![0, m - 1],
            vals: vec![-(x[m - 1] - x[0]).ln(); 2],
        };
        if let Some(shape) = warm {
            if shape.support() == (x[0], x[m - 1]) {
                let mut knots = Vec::with_capacity(shape.len());
                let mut vals = Vec::with_capacity(shape.len());
                for (&t, &v) in shape.knots().iter().zip(shape.values()) {
                    if let Ok(i) = x.binary_search_by(|p| p.total_cmp(&t)) {
                        knots.push(i);
                        vals.push(v);
                    }
                }
                set.knots = knots;
                set.vals = vals;
            }
        }
        set
    }

    fn run(&mut self, max_iter: usize) -> usize {
        let scale = self.x[self.x.len() - 1] - self.x[0];
        let act_eps = ACTIVATION_EPS * scale.max(f64::MIN_POSITIVE);
        self.settle();
        let mut rejected: HashSet<usize> = HashSet::new();
        let mut iter = 0;
        while iter < max_iter {
            iter += 1;
            let hinge = self.hinge_derivatives();
            let mut best: Option<(usize, f64)> = None;
            let mut ki = 0;
            for (i, &h) in hinge.iter().enumerate() {
                if ki < self.knots.len() && self.knots[ki] == i {
                    ki += 1;
                    continue;
                }
                if h > act_eps && !rejected.contains(&i) && best.is_none_or(|(_, b)| h > b) {
                    best = Some((i, h));
                }
            }
            let Some((idx, _)) = best else { break };
            let before = (self.knots.clone(), self.vals.clone());
            self.insert_knot(idx);
            self.settle();
            if self.knots == before.0 {
                // No progress from this candidate; try the next best one.
                self.vals = before.1;
                rejected.insert(idx);
            } else {
                rejected.clear();
            }
        }
        self.prune_flat();
        iter
    }

    fn shape(&self) -> Result<PwlConcave> {
        let knots = self.knots.iter().map(|&i| self.x[i]).collect();
        PwlConcave::new(knots, self.vals.clone())
    }

    fn insert_knot(&mut self, idx: usize) {
        let pos = self.knots.partition_point(|&k| k < idx);
        let (l, r) = (self.knots[pos - 1], self.knots[pos]);
        let lambda = (self.x[idx] - self.x[l]) / (self.x[r] - self.x[l]);
        let v = self.vals[pos - 1] + lambda * (self.vals[pos] - self.vals[pos - 1]);
        self.knots.insert(pos, idx);
        self.vals.insert(pos, v);
    }

    /// Solve the restricted problem, stepping back and dropping knots until
    /// the restricted optimum is concave. Requires the current values to be
    /// concave.
    fn settle(&mut self) {
        loop {
            let target = self.newton(self.vals.clone());
            let kinks_new = kinks(&self.knot_x(), &target);
            if kinks_new.iter().all(|&k| k <= 0.0) {
                self.vals = target;
                return;
            }
            let kinks_old = kinks(&self.knot_x(), &self.vals);
            let mut step = 1.0f64;
            for (&ko, &kn) in kinks_old.iter().zip(&kinks_new) {
                if kn > 0.0 {
                    let t = if ko < 0.0 { ko / (ko - kn) } else { 0.0 };
                    step = step.min(t);
                }
            }
            for (v, t) in self.vals.iter_mut().zip(&target) {
                *v += step * (t - *v);
            }
            // Drop every interior knot whose kink is now flat or positive.
            let kx = self.knot_x();
            let kk = kinks(&kx, &self.vals);
            let slopes = slopes(&kx, &self.vals);
            let mut keep = vec![true; self.knots.len()];
            let mut dropped = false;
            for (j, &k) in kk.iter().enumerate() {
                let s = 1.0 + slopes[j].abs() + slopes[j + 1].abs();
                if k >= -FLAT_KINK * s {
                    keep[j + 1] = false;
                    dropped = true;
                }
            }
            if !dropped {
                // Rounding left the blocking kink marginally negative.
                let j = kk
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(j, _)| j)
                    .unwrap();
                keep[j + 1] = false;
            }
            let mut it = keep.iter();
            self.knots.retain(|_| *it.next().unwrap());
            let mut it = keep.iter();
            self.vals.retain(|_| *it.next().unwrap());
        }
    }

    /// Remove knots with a flat kink, preferring the smaller representation.
    fn prune_flat(&mut self) {
        let kx = self.knot_x();
        let kk = kinks(&kx, &self.vals);
        let sl = slopes(&kx, &self.vals);
        let mut keep = vec![true; self.knots.len()];
        let mut any = false;
        for (j, &k) in kk.iter().enumerate() {
            if k >= -FLAT_KINK * (1.0 + sl[j].abs() + sl[j + 1].abs()) {
                keep[j + 1] = false;
                any = true;
            }
        }
        if any {
            let mut it = keep.iter();
            self.knots.retain(|_| *it.next().unwrap());
            let mut it = keep.iter();
            self.vals.retain(|_| *it.next().unwrap());
            self.vals = self.newton(self.vals.clone());
        }
    }

    fn knot_x(&self) -> Vec<f64> {
        self.knots.iter().map(|&i| self.x[i]).collect()
    }

    /// Coefficients of the linear term `Σ w_i φ(x_i)` in the knot values.
    fn linear_coefficients(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.knots.len()];
        for seg in 0..self.knots.len() - 1 {
            let (l, r) = (self.knots[seg], self.knots[seg + 1]);
            let (xl, xr) = (self.x[l], self.x[r]);
            c[seg] += self.w[l];
            for i in l + 1..r {
                let lambda = (self.x[i] - xl) / (xr - xl);
                c[seg] += self.w[i] * (1.0 - lambda);
                c[seg + 1] += self.w[i] * lambda;
            }
        }
        let last = self.knots.len() - 1;
        c[last] += self.w[self.knots[last]];
        c
    }

    /// Maximize the restricted objective in the knot values.
    fn newton(&self, mut v: Vec<f64>) -> Vec<f64> {
        let kx = self.knot_x();
        let c = self.linear_coefficients();
        let k = v.len();
        let mut grad = vec![0.0; k];
        let mut diag = vec![0.0; k];
        let mut off = vec![0.0; k - 1];
        let mut obj = objective(&kx, &c, &v);
        for _ in 0..NEWTON_MAX_STEPS {
            grad.copy_from_slice(&c);
            diag.iter_mut().for_each(|d| *d = 0.0);
            off.iter_mut().for_each(|d| *d = 0.0);
            for j in 0..k - 1 {
                let d = kx[j + 1] - kx[j];
                let [m0, m1, m2] = segment_moments(v[j], v[j + 1]);
                grad[j] -= d * (m0 - m1);
                grad[j + 1] -= d * m1;
                diag[j] += d * (m0 - 2.0 * m1 + m2);
                diag[j + 1] += d * m2;
                off[j] += d * (m1 - m2);
            }
            let Some(dir) = solve_tridiagonal_spd(&diag, &off, &grad) else {
                break;
            };
            let decrement: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            if !(decrement > 1e-26) {
                break;
            }
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = v.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
                let trial_obj = objective(&kx, &c, &trial);
                // Inside the quadratic region the full step is reliable even
                // when the objective change is below rounding.
                if trial_obj.is_finite()
                    && (trial_obj >= obj + 1e-4 * step * decrement || (step == 1.0 && decrement < 1e-10))
                {
                    v = trial;
                    obj = trial_obj;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        v
    }

    /// Directional derivative of the objective along `min(x - t, 0)` for
    /// every data point `t`, i.e. `∫_{x_1}^t F̂ - ∫_{x_1}^t F_n`.
    fn hinge_derivatives(&self) -> Vec<f64> {
        let m = self.x.len();
        let mut out = Vec::with_capacity(m);
        let mut f_hat = 0.0;
        let mut g_hat = 0.0;
        let mut f_emp = 0.0;
        let mut g_emp = 0.0;
        out.push(0.0);
        let mut seg = 0;
        let mut prev_log = self.vals[0];
        for i in 1..m {
            while self.knots[seg + 1] < i {
                seg += 1;
            }
            let (l, r) = (self.knots[seg], self.knots[seg + 1]);
            let cur_log = if i == r {
                self.vals[seg + 1]
            } else {
                let lambda = (self.x[i] - self.x[l]) / (self.x[r] - self.x[l]);
                self.vals[seg] + lambda * (self.vals[seg + 1] - self.vals[seg])
            };
            let d = self.x[i] - self.x[i - 1];
            f_emp += self.w[i - 1];
            g_emp += d * f_emp;
            let [m0, m1, _] = segment_moments(prev_log, cur_log);
            g_hat += d * f_hat + d * d * (m0 - m1);
            f_hat += d * m0;
            out.push(g_hat - g_emp);
            prev_log = cur_log;
        }
        out
    }
}

fn objective(kx: &[f64], c: &[f64], v: &[f64]) -> f64 {
    let linear: f64 = c.iter().zip(v).map(|(a, b)| a * b).sum();
    let mass: f64 = (0..v.len() - 1)
        .map(|j| (kx[j + 1] - kx[j]) * unit_exp_integral(v[j], v[j + 1]))
        .sum();
    linear - mass
}

fn slopes(kx: &[f64], v: &[f64]) -> Vec<f64> {
    (0..v.len() - 1)
        .map(|j| (v[j + 1] - v[j]) / (kx[j + 1] - kx[j]))
        .collect()
}

/// Slope change at each interior knot; concave iff all are `<= 0`.
fn kinks(kx: &[f64], v: &[f64]) -> Vec<f64> {
    slopes(kx, v).windows(2).map(|s| s[1] - s[0]).collect()
}

/// Solve `A x = b` for symmetric positive definite tridiagonal `A` via an
/// `LDLᵀ` factorization.
fn solve_tridiagonal_spd(diag: &[f64], off: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut d = vec![0.0; n];
    let mut l = vec![0.0; n.saturating_sub(1)];
    d[0] = diag[0];
    for i in 1..n {
        if !(d[i - 1] > 0.0) {
            return None;
        }
        l[i - 1] = off[i - 1] / d[i - 1];
        d[i] = diag[i] - l[i - 1] * off[i - 1];
    }
    if !(d[n - 1] > 0.0) {
        return None;
    }
    let mut y = b.to_vec();
    for i in 1..n {
        y[i] -= l[i - 1] * y[i - 1];
    }
    for i in 0..n {
        y[i] /= d[i];
    }
    for i in (0..n - 1).rev() {
        y[i] -= l[i] * y[i + 1];
    }
    Some(y)
}
