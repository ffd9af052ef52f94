//! Independent ground truth for the generator and the statistical checks.
//!
//! * Harmonizable second moments `E[X_x X_y] = ∫ Re(K_x conj K_y) dxi` by
//!   nested Gauss–Legendre quadrature (see [`crate::quadrature`]).
//! * The exact second moment of the discrete generator.
//! * The rectangular-increment variance bound constant `c1`.
//! * The fractional Brownian sheet covariance, which the model reduces to at
//!   `alpha = 0`.
//! * Exact multivariate normal draws from the quadrature covariance.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{FieldParams, GridSpec};
use crate::quadrature::{nested, partition, single, AxisFactor, AxisSchedule, Density, GaussLegendre};
use crate::synthesis::amplitude_table;

/// A point of the plane.
pub type Point = [f64; 2];

/// Truncation and resolution of the spectral quadrature.
///
/// Per axis, the numerically integrated range runs from
/// `2^octave_min / w_max` to `2^octave_max / w_min` in frequency, where
/// `w_min`, `w_max` are the smallest and largest oscillation frequencies of
/// that axis' kernel factor. Below and above, the integrand is replaced by its
/// leading power law and integrated in closed form; above, each axis factor
/// is replaced by its mean and the oscillating remainder by a two-term
/// asymptotic expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub octave_min: i32,
    pub octave_max: i32,
    pub nodes_per_cell: usize,
    pub target_rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { octave_min: -24, octave_max: 10, nodes_per_cell: 16, target_rel_tol: 1e-5 }
    }
}

impl QuadratureSpec {
    pub fn check(&self) -> Result<()> {
        if self.octave_min >= self.octave_max {
            return Err(Error::InvalidInput(format!(
                "octave_min {} must be below octave_max {}",
                self.octave_min, self.octave_max
            )));
        }
        if self.nodes_per_cell < 4 {
            return Err(Error::InvalidInput(format!("nodes_per_cell {} < 4", self.nodes_per_cell)));
        }
        if !(self.target_rel_tol > 0.0) {
            return Err(Error::InvalidInput(format!("target_rel_tol {} must be positive", self.target_rel_tol)));
        }
        Ok(())
    }

    /// Doubled nodes and a wider truncation, used to estimate the error.
    pub fn refined(&self) -> Self {
        QuadratureSpec {
            octave_min: self.octave_min - 4,
            octave_max: self.octave_max + 1,
            nodes_per_cell: 2 * self.nodes_per_cell,
            target_rel_tol: self.target_rel_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    pub octave_min: i32,
    pub octave_max: i32,
    pub nodes_per_cell: usize,
    pub value: f64,
}

/// A quadrature value with its absolute error estimate: the refinement gap
/// plus a bound on the truncated oscillatory tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub tolerance: f64,
    pub trace: Vec<RefinementStep>,
}

impl QuadratureResult {
    fn exact_zero() -> Self {
        QuadratureResult { value: 0.0, tolerance: 0.0, trace: Vec::new() }
    }

    pub fn relative_tolerance(&self) -> f64 {
        if self.value == 0.0 {
            0.0
        } else {
            self.tolerance / self.value.abs()
        }
    }
}

/// One evaluation at a fixed spec: the value and the size of the asymptotic
/// tail corrections it relied on.
struct Estimate {
    value: f64,
    tail: f64,
}

fn run_refined(spec: &QuadratureSpec, eval: impl Fn(&QuadratureSpec) -> Result<Estimate>) -> Result<QuadratureResult> {
    spec.check()?;
    let fine_spec = spec.refined();
    let coarse = eval(spec)?;
    let fine = eval(&fine_spec)?;
    let gap = (fine.value - coarse.value).abs();
    // the next asymptotic term is smaller by at least 2^-octave_max
    let tolerance = gap + fine.tail * 2f64.powi(-fine_spec.octave_max);
    let allowed = spec.target_rel_tol * fine.value.abs();
    if tolerance > allowed {
        return Err(Error::NonConvergence { estimate: fine.value, gap: tolerance, allowed });
    }
    let step = |s: &QuadratureSpec, v: f64| RefinementStep {
        octave_min: s.octave_min,
        octave_max: s.octave_max,
        nodes_per_cell: s.nodes_per_cell,
        value: v,
    };
    Ok(QuadratureResult {
        value: fine.value,
        tolerance,
        trace: vec![step(spec, coarse.value), step(&fine_spec, fine.value)],
    })
}

/// Exponents `(2H⁻ + 1, 2H⁺ + 1)` of `phi²` on the smaller and larger
/// rescaled frequency.
fn squared_exponents(params: &FieldParams) -> (f64, f64) {
    (2.0 * params.h_minus() + 1.0, 2.0 * params.h_plus() + 1.0)
}

/// `∫ F1(xi1) F2(xi2) / phi²(xi) dxi` over the whole plane, for kernel factors
/// even in each coordinate.
fn plane_integral(factors: [AxisFactor; 2], params: &FieldParams, spec: &QuadratureSpec) -> Result<Estimate> {
    let (a, b) = squared_exponents(params);
    let betas = params.betas();
    let schedules: Vec<AxisSchedule> = (0..2)
        .map(|m| AxisSchedule {
            beta: betas[m],
            max_frequency: factors[m].max_frequency(),
            switch: (2f64.powi(spec.octave_max) / factors[m].min_frequency()).powf(1.0 / betas[m]),
        })
        .collect();
    let lower = (0..2)
        .map(|m| (2f64.powi(spec.octave_min) / factors[m].max_frequency()).powf(1.0 / betas[m]))
        .fold(f64::INFINITY, f64::min);
    let upper = schedules.iter().map(|s| s.switch).fold(0.0, f64::max);
    let edges = partition(lower, upper, &schedules)?;
    let rule = GaussLegendre::new(spec.nodes_per_cell);

    let density = |m: usize, exponent: f64| Density {
        factor: factors[m],
        beta: betas[m],
        exponent,
        switch: schedules[m].switch,
    };
    // u1 < u2: axis 1 carries the smaller exponent; and the mirror triangle
    let lower_triangle = nested(&density(0, a), &density(1, b), &edges, &rule)?;
    let upper_triangle = nested(&density(1, a), &density(0, b), &edges, &rule)?;
    Ok(Estimate {
        value: 4.0 * (lower_triangle.total() + upper_triangle.total()),
        tail: 4.0 * (lower_triangle.oscillating.abs() + upper_triangle.oscillating.abs()),
    })
}

/// `E[X_x X_y]` for the (possibly anisotropic) field.
///
/// The imaginary part of `K_x conj K_y` is odd in each frequency coordinate
/// separately, so only the product of the per-axis real parts survives and
/// the plane integral is four times the positive quadrant.
pub fn covariance_quadrature(x: Point, y: Point, params: &FieldParams, spec: &QuadratureSpec) -> Result<QuadratureResult> {
    spec.check()?;
    let factors = [AxisFactor::new(x[0], y[0]), AxisFactor::new(x[1], y[1])];
    if factors.iter().any(AxisFactor::vanishes) {
        return Ok(QuadratureResult::exact_zero());
    }
    run_refined(spec, |s| plane_integral(factors, params, s))
}

/// `E|ΔX_{(h1,h2);x}|² = ∫ |e^{i h1 xi1} - 1|² |e^{i h2 xi2} - 1|² / phi² dxi`.
/// There is no origin argument: the value does not depend on it.
pub fn increment_variance_quadrature(h1: f64, h2: f64, params: &FieldParams, spec: &QuadratureSpec) -> Result<QuadratureResult> {
    covariance_quadrature([h1, h2], [h1, h2], params, spec)
}

/// `C(s) = ∫_R |e^{i eta} - 1|² |eta|^(-s) d eta` by quadrature.
fn power_moment(s: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    let factor = AxisFactor::new(1.0, 1.0);
    let switch = 2f64.powi(spec.octave_max);
    let schedule = AxisSchedule { beta: 1.0, max_frequency: 1.0, switch };
    let edges = partition(2f64.powi(spec.octave_min), switch, &[schedule])?;
    let density = Density { factor, beta: 1.0, exponent: s, switch };
    let pieces = single(&density, &edges, &GaussLegendre::new(spec.nodes_per_cell))?;
    Ok(Estimate { value: 2.0 * pieces.total(), tail: 2.0 * pieces.oscillating.abs() })
}

/// `c_H = ∫_R |e^{i xi} - 1|² / |xi|^(2H + 1) dxi`, the one-dimensional
/// fractional Brownian motion constant.
pub fn fbm_constant(hurst: f64, spec: &QuadratureSpec) -> Result<QuadratureResult> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(crate::error::ParamError::HurstRange(hurst).into());
    }
    run_refined(spec, |s| power_moment(2.0 * hurst + 1.0, s))
}

/// Constant of the rectangular-increment variance bound
/// `E|ΔX_h|² <= c1 (max(|h1|,|h2|)^(1-alpha) min(|h1|,|h2|)^(1+alpha))^(2H)`.
///
/// `c1 = ∫∫ |e^{i eta1} - 1|² |e^{i eta2} - 1|² / (|eta1|^(2H⁻+1) |eta2|^(2H⁺+1)) d eta`,
/// a product of two one-dimensional moments. It is finite only for
/// `alpha < 1` and `H⁺ < 1`. At `alpha = 1` the first factor diverges
/// logarithmically at infinity. For `H⁺ >= 1` the second diverges at the
/// origin, and no finite constant exists: `E|ΔX_h|²` cannot vanish faster
/// than `min(|h1|,|h2|)²` while the bound does.
pub fn c1_constant(params: &FieldParams, spec: &QuadratureSpec) -> Result<QuadratureResult> {
    if !params.is_isotropic() {
        return Err(Error::InvalidInput("c1 is defined for the isotropic model only".into()));
    }
    if params.alpha() >= 1.0 {
        return Err(Error::Divergent("c1 is infinite at alpha = 1 (H⁻ = 0)".into()));
    }
    if params.h_plus() >= 1.0 {
        return Err(Error::Divergent(format!("c1 is infinite for H⁺ = {} >= 1", params.h_plus())));
    }
    let (a, b) = squared_exponents(params);
    run_refined(spec, |s| {
        let first = power_moment(a, s)?;
        let second = power_moment(b, s)?;
        Ok(Estimate {
            value: first.value * second.value,
            tail: first.tail * second.value.abs() + second.tail * first.value.abs(),
        })
    })
}

/// Right-hand side of the variance bound without the constant.
pub fn bound_shape(h1: f64, h2: f64, params: &FieldParams) -> f64 {
    let (h1, h2) = (h1.abs(), h2.abs());
    let alpha = params.alpha();
    (h1.max(h2).powf(1.0 - alpha) * h1.min(h2).powf(1.0 + alpha)).powf(2.0 * params.hurst())
}

/// Exact variance of the generator output at grid index `(k1, k2)`:
/// `π² Σ g(πn)² |e^{-iπ n1 k1/M} - 1|² |e^{-iπ n2 k2/M} - 1|²`.
pub fn discrete_variance(params: &FieldParams, grid: GridSpec, point: (usize, usize)) -> f64 {
    discrete_covariance(params, grid, point, point)
}

/// Exact covariance of the generator output between two grid indices.
pub fn discrete_covariance(params: &FieldParams, grid: GridSpec, k: (usize, usize), l: (usize, usize)) -> f64 {
    if k.0 == 0 || k.1 == 0 || l.0 == 0 || l.1 == 0 {
        return 0.0;
    }
    let len = grid.noise_len();
    let m = grid.resolution() as f64;
    let table = amplitude_table(params, grid);
    // Re[(e^{-iθk} - 1) conj(e^{-iθl} - 1)] per axis, θ = π n / M
    let axis_weight = |n: i64, kk: usize, ll: usize| {
        let theta = PI * n as f64 / m;
        AxisFactor::new(kk as f64, ll as f64).eval(theta)
    };
    let col_weights: Vec<f64> = (0..len).map(|s2| axis_weight(grid.signed_index(s2), k.1, l.1)).collect();
    let rows: Vec<f64> = (0..len)
        .into_par_iter()
        .map(|s1| {
            let w1 = axis_weight(grid.signed_index(s1), k.0, l.0);
            let row = &table[s1 * len..(s1 + 1) * len];
            w1 * row.iter().zip(&col_weights).map(|(g, w2)| g * g * w2).sum::<f64>()
        })
        .collect();
    PI * PI * rows.iter().sum::<f64>()
}

/// Average of [`discrete_variance`] over the index product `rows × cols`,
/// i.e. the expected pooled second moment of the generator output there.
/// The kernel weights separate, so this costs one `O(M²)` sum.
pub fn mean_discrete_variance(params: &FieldParams, grid: GridSpec, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let len = grid.noise_len();
    let m = grid.resolution() as f64;
    let table = amplitude_table(params, grid);
    let mean_weight = |s: usize, ks: &[usize]| {
        let n = grid.signed_index(s) as f64;
        ks.iter().map(|&k| 4.0 * (PI * n * k as f64 / (2.0 * m)).sin().powi(2)).sum::<f64>() / ks.len() as f64
    };
    let col_weights: Vec<f64> = (0..len).map(|s2| mean_weight(s2, cols)).collect();
    let rows_sum: Vec<f64> = (0..len)
        .into_par_iter()
        .map(|s1| {
            let w1 = mean_weight(s1, rows);
            let row = &table[s1 * len..(s1 + 1) * len];
            w1 * row.iter().zip(&col_weights).map(|(g, w2)| g * g * w2).sum::<f64>()
        })
        .collect();
    PI * PI * rows_sum.iter().sum::<f64>()
}

/// Covariance of the fractional Brownian sheet with equal Hurst indices:
/// `Π_m (c_H / 2)(|x_m|^(2H) + |y_m|^(2H) - |x_m - y_m|^(2H))`.
pub fn fbs_covariance(x: Point, y: Point, hurst: f64, spec: &QuadratureSpec) -> Result<QuadratureResult> {
    let c = fbm_constant(hurst, spec)?;
    let two_h = 2.0 * hurst;
    let shape: f64 = (0..2)
        .map(|m| 0.5 * (x[m].abs().powf(two_h) + y[m].abs().powf(two_h) - (x[m] - y[m]).abs().powf(two_h)))
        .product();
    let value = c.value * c.value * shape;
    Ok(QuadratureResult {
        value,
        tolerance: 2.0 * c.relative_tolerance() * value.abs(),
        trace: c.trace,
    })
}

/// Quadrature covariance matrix of a point set.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    pub points: Vec<Point>,
    pub entries: DMatrix<f64>,
    /// Largest absolute quadrature tolerance among the entries.
    pub tolerance: f64,
}

impl CovarianceMatrix {
    pub fn assemble(points: &[Point], params: &FieldParams, spec: &QuadratureSpec) -> Result<Self> {
        let n = points.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let values: Vec<QuadratureResult> = pairs
            .par_iter()
            .map(|&(i, j)| covariance_quadrature(points[i], points[j], params, spec))
            .collect::<Result<_>>()?;
        let mut entries = DMatrix::zeros(n, n);
        let mut tolerance: f64 = 0.0;
        for (&(i, j), r) in pairs.iter().zip(&values) {
            entries[(i, j)] = r.value;
            entries[(j, i)] = r.value;
            tolerance = tolerance.max(r.tolerance);
        }
        Ok(CovarianceMatrix { points: points.to_vec(), entries, tolerance })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Largest point set accepted by [`ExactSampler`].
pub const MAX_EXACT_POINTS: usize = 400;

/// Relative diagonal jitter budget, as a fraction of `trace / n`.
pub const JITTER_BUDGET: f64 = 1e-8;

/// Exact Gaussian sampler for a small point set.
///
/// Points on an axis have identically zero rows and are pinned to zero; the
/// rest of the covariance is Cholesky-factorized, adding diagonal jitter
/// `j * trace / n` for `j` in `0, 1e-14, 1e-13, …, 1e-8` until it succeeds.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    covariance: CovarianceMatrix,
    active: Vec<usize>,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl ExactSampler {
    pub fn new(points: &[Point], params: &FieldParams, spec: &QuadratureSpec) -> Result<Self> {
        if points.len() > MAX_EXACT_POINTS {
            return Err(Error::InvalidInput(format!(
                "exact sampling supports at most {MAX_EXACT_POINTS} points, got {}",
                points.len()
            )));
        }
        Self::from_covariance(CovarianceMatrix::assemble(points, params, spec)?)
    }

    pub fn from_covariance(covariance: CovarianceMatrix) -> Result<Self> {
        let active: Vec<usize> = (0..covariance.len()).filter(|&i| covariance.entries[(i, i)] != 0.0).collect();
        let sub = DMatrix::from_fn(active.len(), active.len(), |i, j| covariance.entries[(active[i], active[j])]);
        if active.is_empty() {
            return Ok(ExactSampler { covariance, active, factor: DMatrix::zeros(0, 0), jitter: 0.0 });
        }
        let scale = sub.trace() / active.len() as f64;
        let ladder = std::iter::once(0.0).chain((0..=6).map(|k| 10f64.powi(k - 14)));
        for relative in ladder {
            let mut jittered = sub.clone();
            for i in 0..jittered.nrows() {
                jittered[(i, i)] += relative * scale;
            }
            if let Some(chol) = Cholesky::new(jittered) {
                return Ok(ExactSampler { covariance, active, factor: chol.l(), jitter: relative * scale });
            }
        }
        let min_eigenvalue = SymmetricEigen::new(sub).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        Err(Error::NotFactorizable { min_eigenvalue })
    }

    pub fn covariance(&self) -> &CovarianceMatrix {
        &self.covariance
    }

    /// Absolute diagonal jitter that was added.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// One draw, deterministic in `seed` (ChaCha20, standard normals in point order).
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let z = DVector::from_fn(self.active.len(), |_, _| StandardNormal.sample(&mut rng));
        let draw = &self.factor * z;
        let mut out = vec![0.0; self.covariance.len()];
        for (k, &i) in self.active.iter().enumerate() {
            out[i] = draw[k];
        }
        out
    }
}

/// One exact draw at `points`.
pub fn exact_sample(points: &[Point], params: &FieldParams, spec: &QuadratureSpec, seed: u64) -> Result<Vec<f64>> {
    Ok(ExactSampler::new(points, params, spec)?.sample(seed))
}
