//! Seedable, splittable random streams and inverse-CDF sampling.
//!
//! Streams are ChaCha20 keyed by `base_seed` (expanded with
//! `SeedableRng::seed_from_u64`) with the ChaCha stream word set to
//! `stream_id`. ChaCha is counter based, so streams with distinct ids are
//! independent by construction and the output is identical on every
//! platform. Uniforms take the top 53 bits of each 64-bit output.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::pwl::LogConcaveDensity;

const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    rng: ChaCha20Rng,
    base_seed: u64,
    stream_id: u64,
}

/// The stream `stream_id` of the generator keyed by `base_seed`.
pub fn derive_stream(base_seed: u64, stream_id: u64) -> RngStream {
    let mut rng = ChaCha20Rng::seed_from_u64(base_seed);
    rng.set_stream(stream_id);
    RngStream {
        rng,
        base_seed,
        stream_id,
    }
}

impl RngStream {
    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * UNIT
    }

    /// Uniform on `(0, 1]`; safe to pass to `ln`.
    pub fn next_open_uniform(&mut self) -> f64 {
        1.0 - self.next_uniform()
    }
}

/// One draw from `f` by inverting its CDF at the stream's next uniform.
pub fn draw(f: &LogConcaveDensity, rng: &mut RngStream) -> f64 {
    f.quantile_unchecked(rng.next_uniform())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::{normalize, PwlConcave};

    #[test]
    fn deterministic_and_distinct() {
        let mut a = derive_stream(42, 1);
        let mut b = derive_stream(42, 1);
        let mut c = derive_stream(42, 2);
        let xs: Vec<f64> = (0..10_000).map(|_| a.next_uniform()).collect();
        let ys: Vec<f64> = (0..10_000).map(|_| b.next_uniform()).collect();
        let zs: Vec<f64> = (0..10_000).map(|_| c.next_uniform()).collect();
        assert_eq!(xs, ys);
        assert!(xs.iter().zip(&zs).any(|(x, z)| x != z));
        assert!(xs.iter().all(|u| (0.0..1.0).contains(u)));
    }

    #[test]
    fn golden_prefix() {
        // Frozen from the first run; guards the stream derivation scheme.
        let mut s = derive_stream(2024, 7);
        let got: Vec<u64> = (0..3).map(|_| s.next_u64()).collect();
        assert_eq!(got, GOLDEN_2024_7);
    }

    const GOLDEN_2024_7: [u64; 3] = [9383997279117657204, 10951111854274782064, 443872855450741810];

    #[test]
    fn uniform_density_draw_is_identity() {
        let f = normalize(&PwlConcave::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap());
        let mut s = derive_stream(9, 3);
        let mut peek = s.clone();
        let u = peek.next_uniform();
        let x = draw(&f, &mut s);
        assert!((x - u).abs() < 1e-15);
    }

    #[test]
    fn draws_stay_in_support() {
        let f = normalize(&PwlConcave::new(vec![-1.0, 0.0, 2.0], vec![-4.0, 0.5, -9.0]).unwrap());
        let mut s = derive_stream(1, 1);
        for _ in 0..10_000 {
            let x = draw(&f, &mut s);
            assert!((-1.0..=2.0).contains(&x));
        }
    }
}
