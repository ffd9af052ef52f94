//! Weighted tensorized fractional Brownian fields.
//!
//! Gaussian random fields on the plane with harmonizable representation
//!
//! ```text
//! X_x = ∫ (e^{i x1 xi1} - 1)(e^{i x2 xi2} - 1) / phi(xi) dW(xi),
//! phi(xi) = min(|xi1|, |xi2|)^(H⁻ + 1/2) max(|xi1|, |xi2|)^(H⁺ + 1/2),
//! ```
//!
//! with `H± = (1 ± alpha) H`. `alpha = 0` is the fractional Brownian sheet;
//! as `alpha` grows the tensor-product texture relaxes. An operator-scaling
//! variant rescales each frequency axis by `|xi_m|^(1/beta_m)`.
//!
//! The crate synthesizes samples with a two-pass FFT spectral method and
//! checks them against quadrature of the harmonizable integrals.

pub mod error;
pub mod io;
pub mod oracle;
pub mod params;
pub mod quadrature;
pub mod spectral;
pub mod stats;
pub mod synthesis;

pub use error::{Error, ParamError, Result};
pub use params::{validate, Anisotropy, FieldParams, GridSpec};
pub use synthesis::{synthesize, synthesize_batch, FieldSample};
