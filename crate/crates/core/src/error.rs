use thiserror::Error;

/// Errors raised across the library.
///
/// Rejections (`Rejected`, `Degenerate`) signal measure-zero configurations;
/// samplers catch them and draw again.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point at infinity is outside the affine chart")]
    AtInfinity,
    #[error("antipodal endpoints: minimal geodesic is not unique")]
    Antipodal,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("configuration rejected: {0}")]
    Rejected(String),
    #[error("degenerate projection: {0}")]
    Degenerate(String),
    #[error("refinement budget exhausted: {0}")]
    Refinement(String),
    #[error("quadrature did not converge: estimated error {estimate:e} after {evaluations} evaluations ({detail})")]
    Quadrature {
        estimate: f64,
        evaluations: usize,
        detail: String,
    },
    #[error("internal consistency check failed: {0}")]
    Internal(String),
    #[error("quasimorphism ratio has not been calibrated for {0} strands")]
    Uncalibrated(usize),
    #[error("homogenization sequence is not Cauchy: gap {gap:e} exceeds {tolerance:e}")]
    NotCauchy { gap: f64, tolerance: f64 },
    #[error("rejection ceiling exceeded: {rejected} of {attempted} draws rejected")]
    RejectionCeiling { rejected: usize, attempted: usize },
    #[error("matrix is singular to tolerance (|det| = {0:e}); choose different profiles")]
    Singular(f64),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that mean "resample this configuration".
    pub fn is_rejection(&self) -> bool {
        matches!(
            self,
            Error::Rejected(_) | Error::Degenerate(_) | Error::Antipodal | Error::Refinement(_)
        )
    }
}
