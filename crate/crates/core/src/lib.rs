//! Log-concave density estimation with martingale-posterior uncertainty.
//!
//! [`npmle::fit`] computes the nonparametric maximum-likelihood estimate of a
//! log-concave density. [`martingale`] runs predictive-resampling chains:
//! each chain repeatedly draws a new observation from its current estimate
//! and refits, and the terminal estimates form a posterior ensemble that
//! [`summary`] condenses into pointwise bands.

pub mod empirical;
pub mod error;
pub mod generate;
pub mod martingale;
pub mod npmle;
pub mod pwl;
pub mod sampler;
pub mod summary;

#[cfg(test)]
mod testkit;

pub use empirical::EmpiricalMeasure;
pub use error::{Error, Result};
pub use generate::Family;
pub use martingale::{
    predictive_identity_check, run_chain, run_ensemble, submartingale_gap, ChainDiagnostics,
    ChainState, PosteriorEnsemble, PredictiveCheck, StepRecord, StopRule,
};
pub use npmle::{fit, verify_kkt, FitOptions, KktReport};
pub use pwl::{
    integrate_pwl_against, integrate_pwl_against_empirical, loss, normalize, segment_exp_integral,
    sup_diff, LogConcaveDensity, PiecewiseLinear, PwlConcave,
};
pub use sampler::{derive_stream, draw, RngStream};
pub use summary::{default_grid, ensemble_spread, knot_report, pointwise_band, BandTable, Scale};
