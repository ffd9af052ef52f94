//! Model parameters and the synthesis grid.
//!
//! A [`FieldParams`] is only obtainable through validation, so every value in
//! circulation satisfies the range constraints on `alpha` and `hurst` and, when
//! anisotropy is present, the well-definedness inequality
//! `max(beta) - 1 < 2*hurst < 3*min(beta) - 1`.

use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// Absolute tolerance on `beta1 + beta2 = 2`.
pub const BETA_SUM_TOL: f64 = 1e-12;

/// Diagonal operator-scaling exponents `D = diag(beta1, beta2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anisotropy {
    pub beta1: f64,
    pub beta2: f64,
}

impl Anisotropy {
    pub fn betas(&self) -> [f64; 2] {
        [self.beta1, self.beta2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct FieldParams {
    alpha: f64,
    hurst: f64,
    anisotropy: Option<Anisotropy>,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    alpha: f64,
    hurst: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta2: Option<f64>,
}

impl TryFrom<RawParams> for FieldParams {
    type Error = ParamError;

    fn try_from(raw: RawParams) -> Result<Self, ParamError> {
        let betas = match (raw.beta1, raw.beta2) {
            (Some(b1), Some(b2)) => Some((b1, b2)),
            (None, None) => None,
            (Some(b), None) | (None, Some(b)) => return Err(ParamError::BetaSum { beta1: b, beta2: 0.0 }),
        };
        validate(raw.alpha, raw.hurst, betas)
    }
}

impl From<FieldParams> for RawParams {
    fn from(p: FieldParams) -> Self {
        RawParams {
            alpha: p.alpha,
            hurst: p.hurst,
            beta1: p.anisotropy.map(|a| a.beta1),
            beta2: p.anisotropy.map(|a| a.beta2),
        }
    }
}

/// Validates raw scalars into a [`FieldParams`].
///
/// `beta = (1, 1)` is accepted and normalized to the isotropic model, since
/// both densities coincide there.
pub fn validate(alpha: f64, hurst: f64, anisotropy: Option<(f64, f64)>) -> Result<FieldParams, ParamError> {
    if !alpha.is_finite() || !hurst.is_finite() {
        return Err(ParamError::NotFinite);
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ParamError::AlphaRange(alpha));
    }
    if hurst <= 0.0 || hurst >= 1.0 {
        return Err(ParamError::HurstRange(hurst));
    }
    let anisotropy = match anisotropy {
        None => None,
        Some((beta1, beta2)) => {
            if !beta1.is_finite() || !beta2.is_finite() {
                return Err(ParamError::NotFinite);
            }
            for (index, value) in [(1u8, beta1), (2u8, beta2)] {
                if value <= 0.0 || value >= 2.0 {
                    return Err(ParamError::BetaRange { index, value });
                }
            }
            if (beta1 + beta2 - 2.0).abs() > BETA_SUM_TOL {
                return Err(ParamError::BetaSum { beta1, beta2 });
            }
            let lower = beta1.max(beta2) - 1.0;
            let upper = 3.0 * beta1.min(beta2) - 1.0;
            let two_h = 2.0 * hurst;
            if !(lower < two_h && two_h < upper) {
                return Err(ParamError::WellDefinedness { lower, two_h, upper });
            }
            if beta1 == 1.0 && beta2 == 1.0 {
                None
            } else {
                Some(Anisotropy { beta1, beta2 })
            }
        }
    };
    Ok(FieldParams { alpha, hurst, anisotropy })
}

impl FieldParams {
    pub fn isotropic(alpha: f64, hurst: f64) -> Result<Self, ParamError> {
        validate(alpha, hurst, None)
    }

    pub fn anisotropic(alpha: f64, hurst: f64, beta1: f64, beta2: f64) -> Result<Self, ParamError> {
        validate(alpha, hurst, Some((beta1, beta2)))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn anisotropy(&self) -> Option<Anisotropy> {
        self.anisotropy
    }

    pub fn is_isotropic(&self) -> bool {
        self.anisotropy.is_none()
    }

    /// Per-axis scaling exponents; `(1, 1)` in the isotropic model.
    pub fn betas(&self) -> [f64; 2] {
        self.anisotropy.map_or([1.0, 1.0], |a| a.betas())
    }

    /// `H⁺ = (1 + alpha) * hurst`, the exponent carried by the larger frequency.
    pub fn h_plus(&self) -> f64 {
        (1.0 + self.alpha) * self.hurst
    }

    /// `H⁻ = (1 - alpha) * hurst`, the exponent carried by the smaller frequency.
    pub fn h_minus(&self) -> f64 {
        (1.0 - self.alpha) * self.hurst
    }

    /// Re-runs validation on the stored values.
    pub fn revalidate(&self) -> Result<Self, ParamError> {
        validate(self.alpha, self.hurst, self.anisotropy.map(|a| (a.beta1, a.beta2)))
    }
}

/// Synthesis grid: `M` intervals per axis, sample points `(k1/M, k2/M)` for
/// `k1, k2 ∈ {0, …, M}`, and `2M` noise indices per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct GridSpec {
    resolution: usize,
}

impl TryFrom<usize> for GridSpec {
    type Error = ParamError;

    fn try_from(m: usize) -> Result<Self, ParamError> {
        GridSpec::new(m)
    }
}

impl From<GridSpec> for usize {
    fn from(g: GridSpec) -> usize {
        g.resolution
    }
}

impl GridSpec {
    pub fn new(resolution: usize) -> Result<Self, ParamError> {
        if resolution < 2 || resolution % 2 != 0 {
            return Err(ParamError::Resolution(resolution));
        }
        Ok(GridSpec { resolution })
    }

    /// `M`.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Number of sample points per axis, `M + 1`.
    pub fn points_per_axis(&self) -> usize {
        self.resolution + 1
    }

    /// Number of noise indices per axis, `2M`.
    pub fn noise_len(&self) -> usize {
        2 * self.resolution
    }

    /// Spatial coordinate of grid index `k`.
    pub fn coordinate(&self, k: usize) -> f64 {
        k as f64 / self.resolution as f64
    }

    /// Signed noise indices `-M+1, …, M` in traversal order.
    pub fn noise_indices(&self) -> impl Iterator<Item = i64> {
        let m = self.resolution as i64;
        (-m + 1)..=m
    }

    /// Storage slot of signed noise index `n`, i.e. `n mod 2M`.
    pub fn slot(&self, n: i64) -> usize {
        n.rem_euclid(self.noise_len() as i64) as usize
    }

    /// Signed noise index stored in slot `s` (inverse of [`GridSpec::slot`]).
    pub fn signed_index(&self, s: usize) -> i64 {
        let m = self.resolution as i64;
        let s = s as i64;
        if s > m {
            s - 2 * m
        } else {
            s
        }
    }
}
