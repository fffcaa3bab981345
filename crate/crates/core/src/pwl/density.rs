use super::kernel::{log1p_ratio, segment_moments, unit_exp_integral};
use super::{PiecewiseLinear, PwlConcave};
use crate::error::{invalid, Result};

/// Mass tolerance accepted when adopting an already-normalized shape.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// `exp(shape)` on the support of `shape`, with cached segment masses.
#[derive(Debug, Clone, PartialEq)]
pub struct LogConcaveDensity {
    shape: PwlConcave,
    segment_masses: Vec<f64>,
    /// `cumulative[j]` is the mass left of knot `j`.
    cumulative: Vec<f64>,
    total_mass: f64,
}

/// Shift `shape` by `-log(mass)` so that it integrates to one.
pub fn normalize(shape: &PwlConcave) -> LogConcaveDensity {
    let mass = shape.exp_integral();
    let shifted = PwlConcave(shape.as_pwl().shifted(-mass.ln()));
    LogConcaveDensity::with_masses(shifted)
}

impl LogConcaveDensity {
    pub fn normalize(shape: &PwlConcave) -> Self {
        normalize(shape)
    }

    /// Adopt a shape that is already normalized (for example one read back
    /// from disk) without touching its values.
    pub fn from_normalized(shape: PwlConcave) -> Result<Self> {
        let density = Self::with_masses(shape);
        if (density.total_mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(invalid(format!(
                "shape has mass {} rather than 1",
                density.total_mass
            )));
        }
        Ok(density)
    }

    fn with_masses(shape: PwlConcave) -> Self {
        let segment_masses: Vec<f64> = shape
            .knots()
            .windows(2)
            .zip(shape.values().windows(2))
            .map(|(t, y)| (t[1] - t[0]) * unit_exp_integral(y[0], y[1]))
            .collect();
        let mut cumulative = Vec::with_capacity(segment_masses.len() + 1);
        let mut acc = 0.0;
        cumulative.push(acc);
        for m in &segment_masses {
            acc += m;
            cumulative.push(acc);
        }
        Self {
            shape,
            segment_masses,
            cumulative,
            total_mass: acc,
        }
    }

    pub fn shape(&self) -> &PwlConcave {
        &self.shape
    }

    pub fn log_shape(&self) -> &PiecewiseLinear {
        self.shape.as_pwl()
    }

    pub fn knots(&self) -> &[f64] {
        self.shape.knots()
    }

    pub fn log_values(&self) -> &[f64] {
        self.shape.values()
    }

    pub fn segment_masses(&self) -> &[f64] {
        &self.segment_masses
    }

    pub fn cumulative_masses(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn support(&self) -> (f64, f64) {
        self.shape.support()
    }

    /// Log-density; `-∞` outside the support.
    pub fn eval_log(&self, x: f64) -> f64 {
        self.shape.eval(x)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.shape.eval(x).exp()
    }

    /// Distribution function: prefix masses plus the partial segment.
    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let j = self.shape.segment_of(x);
        let t0 = self.knots()[j];
        let y0 = self.log_values()[j];
        let yx = self.shape.eval(x);
        let partial = (x - t0) * unit_exp_integral(y0, yx);
        (self.cumulative[j] + partial).clamp(0.0, 1.0)
    }

    /// Inverse distribution function by analytic inversion on the segment
    /// holding `u`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(invalid(format!("quantile level {u} outside [0, 1]")));
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        let knots = self.knots();
        let k = knots.len();
        if u <= 0.0 {
            return knots[0];
        }
        if u >= 1.0 {
            return knots[k - 1];
        }
        // Segment selection by binary search over cumulative masses.
        let j = (self.cumulative.partition_point(|&c| c <= u).saturating_sub(1)).min(k - 2);
        let (a, b) = (knots[j], knots[j + 1]);
        let ya = self.log_values()[j];
        let slope = (self.log_values()[j + 1] - ya) / (b - a);
        let q = u - self.cumulative[j];
        let scaled = q * (-ya).exp();
        // x = a + log1p(slope * scaled) / slope
        let x = a + scaled * log1p_ratio(slope * scaled);
        if x.is_nan() {
            return b;
        }
        x.clamp(a, b)
    }

    /// `∫ x f(x) dx`.
    pub fn mean(&self) -> f64 {
        let knots = self.knots();
        let vals = self.log_values();
        let origin = knots[0];
        let mut acc = 0.0;
        for j in 0..knots.len() - 1 {
            let d = knots[j + 1] - knots[j];
            let [m0, m1, _] = segment_moments(vals[j], vals[j + 1]);
            acc += d * ((knots[j] - origin) * m0 + d * m1);
        }
        origin * self.total_mass + acc
    }
}
