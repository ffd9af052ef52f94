use thiserror::Error;

/// A parameter set that violates one of the model constraints.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaRange(f64),
    #[error("hurst must lie in (0, 1), got {0}")]
    HurstRange(f64),
    #[error("beta{index} must lie in (0, 2), got {value}")]
    BetaRange { index: u8, value: f64 },
    #[error("beta1 + beta2 must equal 2, got {beta1} + {beta2} = {}", beta1 + beta2)]
    BetaSum { beta1: f64, beta2: f64 },
    #[error(
        "field is not well defined: need max(beta) - 1 < 2*hurst < 3*min(beta) - 1, \
         got {lower} < {two_h} < {upper}"
    )]
    WellDefinedness { lower: f64, two_h: f64, upper: f64 },
    #[error("grid resolution must be even and at least 2, got {0}")]
    Resolution(usize),
    #[error("non-finite parameter value")]
    NotFinite,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("phi is undefined on the frequency axes, got ({xi1}, {xi2})")]
    OnAxis { xi1: f64, xi2: f64 },
    #[error("quadrature did not converge: estimate {estimate}, refinement gap {gap} (allowed {allowed})")]
    NonConvergence { estimate: f64, gap: f64, allowed: f64 },
    #[error("integral diverges: {0}")]
    Divergent(String),
    #[error("covariance matrix is not factorizable within the jitter budget (most negative eigenvalue {min_eigenvalue})")]
    NotFactorizable { min_eigenvalue: f64 },
    #[error("lag ({lag1}, {lag2}) exceeds grid resolution {resolution}")]
    LagOutOfRange { lag1: usize, lag2: usize, resolution: usize },
    #[error("rescale factor {factor} is invalid: {reason}")]
    RescaleFactor { factor: usize, reason: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
