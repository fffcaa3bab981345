use thiserror::Error;

use crate::npmle::KktReport;
use crate::pwl::LogConcaveDensity;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The sample has fewer than two distinct points, so no log-concave
    /// maximum-likelihood density exists.
    #[error("degenerate sample: {distinct} distinct point(s), need at least 2")]
    DegenerateSample { distinct: usize },

    /// The solver hit its iteration budget before the optimality
    /// certificate passed. The last iterate is carried along so callers can
    /// keep going with it.
    #[error(
        "solver did not converge after {iterations} iterations \
         (max hinge violation {:.3e}, mean gap {:.3e})",
        report.max_hinge_violation,
        report.mean_gap
    )]
    ConvergenceFailure {
        iterations: usize,
        last: Box<LogConcaveDensity>,
        report: KktReport,
    },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
