//! Quadrature machinery for the singular, oscillatory spectral integrals.
//!
//! All integrands handled here have the form `F(xi1) G(xi2) / phi²(xi)` on the
//! positive quadrant. After the substitution `xi_m = u_m^beta_m`, `phi²`
//! becomes `min(u1, u2)^a * max(u1, u2)^b`, which is separable on each side of
//! the diagonal `u1 = u2`. Each triangle is therefore a nested integral
//!
//! ```text
//! T(p, q) = ∫_0^∞ q(v) ∫_0^v p(u) du dv
//! ```
//!
//! of two one-dimensional densities. The half-line is cut into a shared
//! partition: dyadic cells `[2^j, 2^(j+1)]` where the integrand is
//! non-oscillatory, finer cells where an axis factor oscillates, and
//! closed-form power-law pieces below the first and above the last edge.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest phase change of an oscillating factor across one cell.
const MAX_PHASE_PER_CELL: f64 = std::f64::consts::TAU;

/// Partitions larger than this are refused.
const MAX_CELLS: usize = 1 << 22;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    if n == 0 {
        (1.0, 0.0)
    } else {
        (p1, d)
    }
}

/// Real part of `(e^{i x xi} - 1)(e^{-i y xi} - 1)`, i.e.
/// `4 sin(x xi / 2) sin(y xi / 2) cos((x - y) xi / 2)`.
///
/// With `x = y = h` this is `|e^{i h xi} - 1|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisFactor {
    pub x: f64,
    pub y: f64,
}

impl AxisFactor {
    pub fn new(x: f64, y: f64) -> Self {
        AxisFactor { x, y }
    }

    pub fn eval(&self, xi: f64) -> f64 {
        4.0 * (0.5 * self.x * xi).sin() * (0.5 * self.y * xi).sin() * (0.5 * (self.x - self.y) * xi).cos()
    }

    /// Imaginary part of the same product.
    pub fn eval_imag(&self, xi: f64) -> f64 {
        4.0 * (0.5 * self.x * xi).sin() * (0.5 * self.y * xi).sin() * (0.5 * (self.x - self.y) * xi).sin()
    }

    pub fn vanishes(&self) -> bool {
        self.x == 0.0 || self.y == 0.0
    }

    /// `kappa` in `eval(xi) ≈ kappa xi²` as `xi → 0`.
    pub fn small_coefficient(&self) -> f64 {
        self.x * self.y
    }

    /// Non-oscillating part of `1 - cos(x xi) - cos(y xi) + cos((x - y) xi)`.
    pub fn mean(&self) -> f64 {
        if self.vanishes() {
            0.0
        } else if self.x == self.y {
            2.0
        } else {
            1.0
        }
    }

    /// `(c, w)` with `F(xi) = mean + Σ c cos(w xi)`, `w > 0`.
    pub fn oscillating_terms(&self) -> impl Iterator<Item = (f64, f64)> {
        let terms = if self.vanishes() {
            [(0.0, 0.0); 3]
        } else {
            [(-1.0, self.x.abs()), (-1.0, self.y.abs()), (1.0, (self.x - self.y).abs())]
        };
        terms.into_iter().filter(|(_, w)| *w > 0.0)
    }

    fn frequencies(&self) -> impl Iterator<Item = f64> {
        [self.x.abs(), self.y.abs(), (self.x - self.y).abs()].into_iter().filter(|w| *w > 0.0)
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequencies().fold(0.0, f64::max)
    }

    pub fn min_frequency(&self) -> f64 {
        self.frequencies().fold(f64::INFINITY, f64::min)
    }
}

/// A one-dimensional density `s(u) = F(u^beta) * beta * u^(beta - 1 - exponent)`
/// in the substituted variable `u`, where `F` is an [`AxisFactor`].
///
/// Beyond `switch` the factor is replaced by its mean.
#[derive(Debug, Clone, Copy)]
pub struct Density {
    pub factor: AxisFactor,
    pub beta: f64,
    pub exponent: f64,
    pub switch: f64,
}

impl Density {
    pub fn eval(&self, u: f64) -> f64 {
        let xi = u.powf(self.beta);
        let f = if u >= self.switch { self.factor.mean() } else { self.factor.eval(xi) };
        f * self.beta * ((self.beta - 1.0 - self.exponent) * u.ln()).exp()
    }

    /// Power of `u` in the small-`u` expansion of `∫_0^u s`.
    fn head_power(&self) -> f64 {
        3.0 * self.beta - self.exponent
    }

    /// `∫_0^u0 s ≈ kappa beta u0^(3 beta - e) / (3 beta - e)`.
    fn head_integral(&self, u0: f64) -> Result<f64> {
        let k = self.head_power();
        if k <= 0.0 {
            return Err(Error::Divergent(format!("density not integrable at the origin (power {k})")));
        }
        Ok(self.factor.small_coefficient() * self.beta * u0.powf(k) / k)
    }

    /// `c` in `s(u) ~ mean * beta * u^(-c - 1)` at infinity.
    fn tail_decay(&self) -> f64 {
        self.exponent - self.beta
    }

    /// `∫_U^∞ s` with the factor replaced by its mean.
    fn tail_mean(&self, upper: f64) -> Result<f64> {
        let c = self.tail_decay();
        if c <= 0.0 {
            return Err(Error::Divergent(format!("density not integrable at infinity (decay {c})")));
        }
        Ok(self.factor.mean() * self.beta * upper.powf(-c) / c)
    }

    /// Asymptotic value of `∫_u^∞` of the oscillating part of `s`.
    ///
    /// In `xi = u^beta` the density is `F(xi) xi^(-r)` with `r = e / beta`;
    /// each `c cos(w xi)` term of `F` integrates by parts to
    /// `c (-sin(w X) X^(-r) / w + r cos(w X) X^(-r-1) / w²)` at `X = u^beta`.
    fn oscillating_tail(&self, u: f64) -> f64 {
        let x = u.powf(self.beta);
        let r = self.exponent / self.beta;
        let envelope = x.powf(-r);
        self.factor
            .oscillating_terms()
            .map(|(c, w)| c * (-(w * x).sin() * envelope / w + r * (w * x).cos() * envelope / (x * w * w)))
            .sum()
    }
}

/// Per-axis information needed to place cell edges.
#[derive(Debug, Clone, Copy)]
pub struct AxisSchedule {
    pub beta: f64,
    pub max_frequency: f64,
    /// `u` beyond which the factor is averaged; no resolution constraint there.
    pub switch: f64,
}

/// Cell edges from `lower` to `upper`: dyadic, refined wherever an axis
/// factor would change phase by more than one period across a cell. Every
/// axis `switch` inside the range is an edge.
pub fn partition(lower: f64, upper: f64, axes: &[AxisSchedule]) -> Result<Vec<f64>> {
    if !(lower > 0.0 && upper > lower) {
        return Err(Error::InvalidInput(format!("bad partition range [{lower}, {upper}]")));
    }
    let mut stops: Vec<f64> = axes.iter().map(|a| a.switch).filter(|s| *s > lower && *s < upper).collect();
    stops.push(upper);
    stops.sort_by(f64::total_cmp);

    let mut edges = vec![lower];
    let mut u = lower;
    for stop in stops {
        while u < stop {
            let dyadic = 2f64.powi(u.log2().floor() as i32 + 1);
            let mut next = dyadic.min(stop);
            for axis in axes {
                if u < axis.switch && axis.max_frequency > 0.0 {
                    let xi = u.powf(axis.beta);
                    let step = (xi + MAX_PHASE_PER_CELL / axis.max_frequency).powf(1.0 / axis.beta) - u;
                    next = next.min(u + step);
                }
            }
            // guard against stalling from rounding
            if next <= u {
                next = stop;
            }
            edges.push(next);
            u = next;
            if edges.len() > MAX_CELLS {
                return Err(Error::InvalidInput(format!(
                    "quadrature partition exceeds {MAX_CELLS} cells; frequency range too wide"
                )));
            }
        }
    }
    Ok(edges)
}

/// Integral pieces of one nested evaluation, kept apart for error reporting.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pieces {
    pub head: f64,
    pub body: f64,
    pub tail: f64,
    /// Part of `tail` from the asymptotic oscillating corrections.
    pub oscillating: f64,
}

impl Pieces {
    pub fn total(&self) -> f64 {
        self.head + self.body + self.tail
    }
}

/// `T(p, q) = ∫_0^∞ q(v) ∫_0^v p(u) du dv` over the given edges.
///
/// Each density's `switch` must be an edge or lie beyond the last one.
pub fn nested(p: &Density, q: &Density, edges: &[f64], rule: &GaussLegendre) -> Result<Pieces> {
    let u0 = edges[0];
    let upper = *edges.last().expect("non-empty partition");

    let inner_head = p.head_integral(u0)?;
    let e = p.head_power() + q.head_power();
    let head = q.factor.small_coefficient() * q.beta * inner_head * u0.powf(e) / e;

    let cells: Vec<(f64, f64, f64)> = edges
        .par_windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let mut pk = 0.0;
            let mut qk = 0.0;
            let mut dk = 0.0;
            for (v, wv) in rule.mapped(lo, hi) {
                pk += wv * p.eval(v);
                let qv = q.eval(v);
                qk += wv * qv;
                dk += wv * qv * rule.integrate(lo, v, |u| p.eval(u));
            }
            (pk, qk, dk)
        })
        .collect();

    // inner integral up to each edge
    let mut inner = Vec::with_capacity(edges.len());
    inner.push(inner_head);
    let mut body = 0.0;
    for &(pk, qk, dk) in &cells {
        let cumulative = *inner.last().expect("seeded");
        body += qk * cumulative + dk;
        inner.push(cumulative + pk);
    }
    let cumulative = *inner.last().expect("seeded");

    // beyond the last edge both factors are averaged
    let c = q.tail_decay();
    let h = p.beta - p.exponent;
    if c - h <= 0.0 {
        return Err(Error::Divergent(format!("nested integral not integrable at infinity ({c} <= {h})")));
    }
    let joint = p.factor.mean() * q.factor.mean() * p.beta * q.beta * upper.powf(h - c) / (c * (c - h));
    let q_tail = q.tail_mean(upper)?;
    let tail = cumulative * q_tail + joint;

    // oscillating parts dropped past each switch, to leading order
    let edge_index = |u: f64| edges.iter().position(|e| *e >= u).unwrap_or(edges.len() - 1);
    let q_switch = q.switch.min(upper);
    let q_osc = q.oscillating_tail(q_switch);
    let p_switch = p.switch.min(upper);
    let q_beyond: f64 = cells[edge_index(p_switch)..].iter().map(|c| c.1).sum::<f64>() + q_tail + q_osc;
    let oscillating = inner[edge_index(q_switch)] * q_osc + p.oscillating_tail(p_switch) * q_beyond;

    Ok(Pieces { head, body, tail: tail + oscillating, oscillating })
}

/// `∫_0^∞ s(u) du` over the given edges.
pub fn single(s: &Density, edges: &[f64], rule: &GaussLegendre) -> Result<Pieces> {
    let head = s.head_integral(edges[0])?;
    let body: f64 = edges
        .par_windows(2)
        .map(|w| rule.integrate(w[0], w[1], |u| s.eval(u)))
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let upper = *edges.last().expect("non-empty partition");
    let oscillating = s.oscillating_tail(s.switch.min(upper));
    Ok(Pieces { head, body, tail: s.tail_mean(upper)? + oscillating, oscillating })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        for n in [4, 8, 16, 33] {
            let rule = GaussLegendre::new(n);
            assert_eq!(rule.len(), n);
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13);
            for deg in 0..(2 * n) {
                let got = rule.integrate(0.0, 2.0, |x| x.powi(deg as i32));
                let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
                assert!((got - exact).abs() < 1e-12 * exact, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn axis_factor_matches_expanded_form() {
        let f = AxisFactor::new(0.7, -0.3);
        for xi in [0.1f64, 1.0, 3.7, 100.0] {
            let expanded = 1.0 - (0.7f64 * xi).cos() - (0.3f64 * xi).cos() + (1.0f64 * xi).cos();
            assert!((f.eval(xi) - expanded).abs() < 1e-13);
        }
        let same = AxisFactor::new(0.5, 0.5);
        assert!((same.eval(2.0) - (2.0 - 2.0 * 1f64.cos())).abs() < 1e-14);
        assert_eq!(same.eval_imag(2.0), 0.0);
        assert_eq!(same.mean(), 2.0);
        assert_eq!(f.mean(), 1.0);
        assert_eq!(AxisFactor::new(0.0, 1.0).mean(), 0.0);
    }

    #[test]
    fn partition_respects_phase_limit_and_switch() {
        let axes = [AxisSchedule { beta: 1.0, max_frequency: 1.0, switch: 1000.0 }];
        let edges = partition(1e-6, 1e5, &axes).unwrap();
        assert!(edges.contains(&1000.0));
        for w in edges.windows(2) {
            assert!(w[1] > w[0]);
            if w[1] <= 1000.0 {
                assert!(w[1] - w[0] <= MAX_PHASE_PER_CELL * (1.0 + 1e-12));
            }
        }
        // dyadic above the switch
        let above: Vec<_> = edges.iter().filter(|e| **e > 1000.0).collect();
        assert!(above.len() < 10);
    }

    #[test]
    fn single_integral_matches_closed_form() {
        // ∫_0^∞ (2 - 2 cos t) t^(-2) dt = π
        let s = Density { factor: AxisFactor::new(1.0, 1.0), beta: 1.0, exponent: 2.0, switch: 2048.0 };
        let axes = [AxisSchedule { beta: 1.0, max_frequency: 1.0, switch: 2048.0 }];
        let edges = partition(1e-8, 2048.0, &axes).unwrap();
        let v = single(&s, &edges, &GaussLegendre::new(16)).unwrap().total();
        assert!((v - std::f64::consts::PI).abs() < 1e-4, "{v}");
    }

    #[test]
    fn divergence_detected() {
        let s = Density { factor: AxisFactor::new(1.0, 1.0), beta: 1.0, exponent: 1.0, switch: 10.0 };
        let edges = partition(1e-3, 10.0, &[]).unwrap();
        assert!(matches!(single(&s, &edges, &GaussLegendre::new(8)), Err(Error::Divergent(_))));
    }
}
