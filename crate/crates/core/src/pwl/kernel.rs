//! Scalar kernels for integrals of `exp` of a linear function over a
//! segment, written so that nearly flat segments do not lose precision.

use crate::error::{invalid, Result};

/// Below this `|Δy|` the exp-integral switches to its Taylor expansion.
pub const SMALL_SLOPE_SWITCH: f64 = 1e-6;

/// Below this `|d|` the first and second moment kernels use their power
/// series; the closed forms cancel badly near zero.
pub(crate) const MOMENT_SERIES_SWITCH: f64 = 0.5;

const MOMENT_SERIES_TERMS: usize = 24;

/// `∫_0^1 exp(u d) du`.
#[inline]
pub(crate) fn exp_mean(d: f64) -> f64 {
    if d.abs() > SMALL_SLOPE_SWITCH {
        d.exp_m1() / d
    } else {
        1.0 + d * (0.5 + d * (1.0 / 6.0 + d / 24.0))
    }
}

/// `log1p(z) / z`, continuous at zero.
#[inline]
pub(crate) fn log1p_ratio(z: f64) -> f64 {
    if z.abs() > SMALL_SLOPE_SWITCH {
        z.ln_1p() / z
    } else {
        1.0 + z * (-0.5 + z * (1.0 / 3.0 - z / 4.0))
    }
}

/// `(j0, j1, j2)` with `jk(d) = ∫_0^1 u^k exp(u d) du`.
pub(crate) fn exp_power_moments(d: f64) -> [f64; 3] {
    if d.abs() < MOMENT_SERIES_SWITCH {
        // jk(d) = Σ_n d^n / (n! (n + k + 1))
        let mut j = [0.0; 3];
        let mut term = 1.0;
        for n in 0..MOMENT_SERIES_TERMS {
            let nf = n as f64;
            j[0] += term / (nf + 1.0);
            j[1] += term / (nf + 2.0);
            j[2] += term / (nf + 3.0);
            term *= d / (nf + 1.0);
        }
        j
    } else {
        let e = d.exp();
        let d2 = d * d;
        [
            d.exp_m1() / d,
            (e * (d - 1.0) + 1.0) / d2,
            (e * (d2 - 2.0 * d + 2.0) - 2.0) / (d2 * d),
        ]
    }
}

/// `Mk = ∫_0^1 u^k exp((1-u) a + u b) du` for `k = 0, 1, 2`.
///
/// The exponential is factored out at the larger endpoint so the remaining
/// kernels only ever see non-positive arguments.
pub(crate) fn segment_moments(a: f64, b: f64) -> [f64; 3] {
    if b <= a {
        let base = a.exp();
        let [j0, j1, j2] = exp_power_moments(b - a);
        [base * j0, base * j1, base * j2]
    } else {
        // u -> 1 - u
        let base = b.exp();
        let [j0, j1, j2] = exp_power_moments(a - b);
        [
            base * j0,
            base * (j0 - j1),
            base * (j0 - 2.0 * j1 + j2),
        ]
    }
}

/// `∫_0^1 exp((1-u) a + u b) du` without the moment machinery.
#[inline]
pub(crate) fn unit_exp_integral(a: f64, b: f64) -> f64 {
    if b <= a {
        a.exp() * exp_mean(b - a)
    } else {
        b.exp() * exp_mean(a - b)
    }
}

/// Integral of `exp` of the line through `(a, ya)` and `(b, yb)` over `[a, b]`.
pub fn segment_exp_integral(a: f64, b: f64, ya: f64, yb: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && ya.is_finite() && yb.is_finite()) {
        return Err(invalid("segment endpoints and values must be finite"));
    }
    if a >= b {
        return Err(invalid(format!("segment requires a < b, got [{a}, {b}]")));
    }
    Ok((b - a) * unit_exp_integral(ya, yb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::quad;

    #[test]
    fn flat_and_unit_slope() {
        assert_eq!(segment_exp_integral(0.0, 1.0, 0.0, 0.0).unwrap(), 1.0);
        let v = segment_exp_integral(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn matches_quadrature() {
        let v = segment_exp_integral(0.0, 2.0, -0.3, 0.7).unwrap();
        let q = quad(|x| (-0.3 + 0.5 * x).exp(), 0.0, 2.0);
        assert!((v - q).abs() < 1e-10, "{v} vs {q}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(segment_exp_integral(0.0, 1.0, f64::NAN, 0.0).is_err());
        assert!(segment_exp_integral(0.0, 1.0, 0.0, f64::INFINITY).is_err());
        assert!(segment_exp_integral(1.0, 1.0, 0.0, 0.0).is_err());
    }

    // Closed forms evaluated without any branch, for comparing against the
    // series branch at the same argument.
    fn closed_moments(d: f64) -> [f64; 3] {
        let e = d.exp();
        let d2 = d * d;
        [
            d.exp_m1() / d,
            (e * (d - 1.0) + 1.0) / d2,
            (e * (d2 - 2.0 * d + 2.0) - 2.0) / (d2 * d),
        ]
    }

    #[test]
    fn branches_agree_at_switches() {
        for sign in [-1.0, 1.0] {
            for f in [1.0 - 1e-3, 1.0 + 1e-3] {
                let d = sign * SMALL_SLOPE_SWITCH * f;
                assert!((exp_mean(d) - d.exp_m1() / d).abs() < 1e-15);
                assert!((log1p_ratio(d) - d.ln_1p() / d).abs() < 1e-15);

                let d = sign * MOMENT_SERIES_SWITCH * f;
                let (series, closed) = (exp_power_moments(d), closed_moments(d));
                for k in 0..3 {
                    assert!((series[k] - closed[k]).abs() < 1e-9 * closed[k], "k={k} d={d}");
                }
            }
        }
    }

    #[test]
    fn integral_accurate_on_both_sides_of_switch() {
        for sign in [-1.0, 1.0] {
            for f in [1.0 - 1e-3, 1.0 + 1e-3] {
                let dy = sign * SMALL_SLOPE_SWITCH * f;
                let v = segment_exp_integral(0.0, 1.0, 0.2, 0.2 + dy).unwrap();
                let q = quad(|x| (0.2 + dy * x).exp(), 0.0, 1.0);
                assert!((v - q).abs() < 1e-9 * q);
            }
        }
    }

    #[test]
    fn moments_match_quadrature() {
        for &(a, b) in &[(0.0, 0.0), (0.3, -0.2), (-1.0, 4.0), (2.0, -7.5), (1e-7, 0.0)] {
            let m = segment_moments(a, b);
            for k in 0..3 {
                let q = quad(
                    |u: f64| u.powi(k as i32) * ((1.0 - u) * a + u * b).exp(),
                    0.0,
                    1.0,
                );
                assert!((m[k] - q).abs() <= 1e-11 * q.abs().max(1e-300), "{a} {b} k={k}");
            }
        }
    }
}
