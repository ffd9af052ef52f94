//! Spectral density root `phi` and the synthesis amplitude `g = 1/phi`.
//!
//! `phi(xi) = min(|xi1|, |xi2|)^(H⁻ + 1/2) * max(|xi1|, |xi2|)^(H⁺ + 1/2)`, and
//! in the anisotropic model each modulus is first raised to `1/beta_m`.
//! Everything is evaluated in log space; the quadrature probes frequencies
//! across dozens of octaves where direct powers would under- or overflow.

use crate::error::{Error, Result};
use crate::params::FieldParams;

/// Angular frequency `(xi1, xi2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyPoint {
    pub xi1: f64,
    pub xi2: f64,
}

impl FrequencyPoint {
    pub fn new(xi1: f64, xi2: f64) -> Self {
        FrequencyPoint { xi1, xi2 }
    }

    fn on_axis(&self) -> bool {
        self.xi1 == 0.0 || self.xi2 == 0.0
    }
}

/// Exponents `(H⁻ + 1/2, H⁺ + 1/2)` applied to the smaller and larger
/// (rescaled) frequency modulus.
pub fn exponents(params: &FieldParams) -> (f64, f64) {
    (params.h_minus() + 0.5, params.h_plus() + 0.5)
}

/// `ln phi` at a point off the axes, using the per-axis scaling exponents of
/// `params` (unit exponents in the isotropic model).
fn ln_phi(params: &FieldParams, p: FrequencyPoint) -> f64 {
    let (e_min, e_max) = exponents(params);
    let [b1, b2] = params.betas();
    let l1 = p.xi1.abs().ln() / b1;
    let l2 = p.xi2.abs().ln() / b2;
    e_min * l1.min(l2) + e_max * l1.max(l2)
}

/// Isotropic spectral density root. Any anisotropy in `params` is ignored.
pub fn phi(params: &FieldParams, p: FrequencyPoint) -> Result<f64> {
    if p.on_axis() {
        return Err(Error::OnAxis { xi1: p.xi1, xi2: p.xi2 });
    }
    let (e_min, e_max) = exponents(params);
    let l1 = p.xi1.abs().ln();
    let l2 = p.xi2.abs().ln();
    Ok((e_min * l1.min(l2) + e_max * l1.max(l2)).exp())
}

/// Operator-scaling density root `phi(|xi1|^(1/beta1), |xi2|^(1/beta2))`.
/// Reduces to [`phi`] for isotropic parameters.
pub fn phi_aniso(params: &FieldParams, p: FrequencyPoint) -> Result<f64> {
    if p.on_axis() {
        return Err(Error::OnAxis { xi1: p.xi1, xi2: p.xi2 });
    }
    Ok(ln_phi(params, p).exp())
}

/// Synthesis amplitude: `1/phi` off the axes, exactly zero on them.
pub fn amplitude(params: &FieldParams, p: FrequencyPoint) -> f64 {
    if p.on_axis() {
        0.0
    } else {
        (-ln_phi(params, p)).exp()
    }
}
