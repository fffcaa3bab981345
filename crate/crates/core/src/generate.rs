//! Synthetic data from a few log-concave families, driven by the same
//! [`RngStream`] machinery as the sampler so that every data set is a pure
//! function of its seed.
//!
//! Normal draws use Box-Muller (both variates of each pair are used).
//! Exponential and Laplace use inversion. Gamma with shape `>= 1` uses the
//! Marsaglia-Tsang squeeze/rejection scheme; shape `< 1` boosts a
//! `Gamma(shape + 1)` draw by `U^(1/shape)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::sampler::{derive_stream, RngStream};

/// Stream id reserved for data generation.
pub const GENERATOR_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Normal { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
    Laplace { mu: f64, b: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Family::Normal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
            Family::Exponential { rate } => rate.is_finite() && rate > 0.0,
            Family::Laplace { mu, b } => mu.is_finite() && b.is_finite() && b > 0.0,
            Family::Gamma { shape, scale } => {
                shape.is_finite() && scale.is_finite() && shape > 0.0 && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid parameters for {self}")))
        }
    }

    /// `n` draws using stream [`GENERATOR_STREAM`] of `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let mut rng = derive_stream(seed, GENERATOR_STREAM);
        let mut out = Vec::with_capacity(n);
        match *self {
            Family::Normal { mu, sigma } => {
                while out.len() < n {
                    let (z1, z2) = box_muller(&mut rng);
                    out.push(mu + sigma * z1);
                    if out.len() < n {
                        out.push(mu + sigma * z2);
                    }
                }
            }
            Family::Exponential { rate } => {
                out.extend((0..n).map(|_| -rng.next_open_uniform().ln() / rate));
            }
            Family::Laplace { mu, b } => {
                out.extend((0..n).map(|_| {
                    let u = rng.next_uniform() - 0.5;
                    mu - b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
                }));
            }
            Family::Gamma { shape, scale } => {
                out.extend((0..n).map(|_| scale * gamma_unit(&mut rng, shape)));
            }
        }
        Ok(out)
    }
}

fn box_muller(rng: &mut RngStream) -> (f64, f64) {
    let r = (-2.0 * rng.next_open_uniform().ln()).sqrt();
    let theta = std::f64::consts::TAU * rng.next_uniform();
    (r * theta.cos(), r * theta.sin())
}

fn standard_normal(rng: &mut RngStream) -> f64 {
    box_muller(rng).0
}

fn gamma_unit(rng: &mut RngStream, shape: f64) -> f64 {
    if shape < 1.0 {
        let boost = rng.next_open_uniform().powf(1.0 / shape);
        return gamma_unit(rng, shape + 1.0) * boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z = standard_normal(rng);
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.next_open_uniform();
        if u < 1.0 - 0.0331 * z.powi(4) || u.ln() < 0.5 * z * z + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Family::Normal { mu, sigma } => write!(f, "normal({mu},{sigma})"),
            Family::Exponential { rate } => write!(f, "exponential({rate})"),
            Family::Laplace { mu, b } => write!(f, "laplace({mu},{b})"),
            Family::Gamma { shape, scale } => write!(f, "gamma({shape},{scale})"),
        }
    }
}

/// Parses `name(p1,p2,...)`, e.g. `normal(0,1)` or `exponential(5)`.
impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| invalid(format!("expected name(params), got {s:?}")))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| invalid(format!("missing ')' in {s:?}")))?;
        let params: Vec<f64> = args
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("bad parameter {p:?} in {s:?}")))
            })
            .collect::<Result<_>>()?;
        let family = match (name.trim().to_ascii_lowercase().as_str(), params.as_slice()) {
            ("normal", &[mu, sigma]) => Family::Normal { mu, sigma },
            ("exponential" | "exp", &[rate]) => Family::Exponential { rate },
            ("laplace", &[mu, b]) => Family::Laplace { mu, b },
            ("gamma", &[shape, scale]) => Family::Gamma { shape, scale },
            (other, p) => {
                return Err(invalid(format!(
                    "unknown distribution {other:?} with {} parameter(s)",
                    p.len()
                )))
            }
        };
        family.validate()?;
        Ok(family)
    }
}
