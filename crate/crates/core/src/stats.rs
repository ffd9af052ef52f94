//! Estimators over sample batches: rectangular increments, pooled moments,
//! stationarity and variance-bound checks, and the moment table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{bound_shape, discrete_variance, mean_discrete_variance};
use crate::params::{FieldParams, GridSpec};
use crate::synthesis::FieldSample;

/// Bootstrap resamples used for the skewness standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Seed of the bootstrap resampler.
pub const BOOTSTRAP_SEED: u64 = 0x5EED_B007;

/// A dense row-major 2-D array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Grid2 {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }
}

/// Rectangular increments of one field at fixed integer lags, indexed by origin.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementField {
    pub lags: (usize, usize),
    pub values: Grid2,
}

/// Four-corner increments
/// `X[k1+L1][k2+L2] - X[k1][k2+L2] - X[k1+L1][k2] + X[k1][k2]` for every origin
/// `(k1, k2)` that keeps the rectangle on the grid.
pub fn rectangular_increment(sample: &FieldSample, lag1: usize, lag2: usize) -> Result<IncrementField> {
    let side = sample.side();
    let m = sample.grid.resolution();
    if lag1 > m || lag2 > m {
        return Err(Error::LagOutOfRange { lag1, lag2, resolution: m });
    }
    let values = increments_of(&sample.values, side, side, lag1, lag2);
    Ok(IncrementField { lags: (lag1, lag2), values })
}

fn increments_of(values: &[f64], rows: usize, cols: usize, lag1: usize, lag2: usize) -> Grid2 {
    let out_rows = rows - lag1;
    let out_cols = cols - lag2;
    let at = |i: usize, j: usize| values[i * cols + j];
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for k1 in 0..out_rows {
        for k2 in 0..out_cols {
            out.push(at(k1 + lag1, k2 + lag2) - at(k1, k2 + lag2) - at(k1 + lag1, k2) + at(k1, k2));
        }
    }
    Grid2 { rows: out_rows, cols: out_cols, values: out }
}

/// Pooled moments over every entry of every array.
///
/// Standard errors treat arrays, not entries, as independent replicates:
/// entries of one field are strongly dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub mean: f64,
    pub variance: f64,
    /// Third standardized central moment, uncorrected for bias. `None` for
    /// degenerate input.
    pub skewness: Option<f64>,
    /// Mean of squares, the unbiased target for a centered field.
    pub second_moment: f64,
    pub standard_error_mean: Option<f64>,
    pub standard_error_variance: Option<f64>,
    pub standard_error_second_moment: Option<f64>,
    pub standard_error_skewness: Option<f64>,
    /// Number of pooled entries.
    pub count: usize,
    /// Number of arrays.
    pub replicates: usize,
}

/// Shifted power sums of one array.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    n: f64,
    s1: f64,
    s2: f64,
    s3: f64,
    raw2: f64,
}

impl Sums {
    fn of(values: &[f64], shift: f64) -> Sums {
        let mut s = Sums { n: values.len() as f64, ..Sums::default() };
        for &v in values {
            let d = v - shift;
            s.s1 += d;
            s.s2 += d * d;
            s.s3 += d * d * d;
            s.raw2 += v * v;
        }
        s
    }

    fn add(&mut self, o: &Sums) {
        self.n += o.n;
        self.s1 += o.s1;
        self.s2 += o.s2;
        self.s3 += o.s3;
        self.raw2 += o.raw2;
    }

    /// `(mean offset, m2, m3)` central moments about the sums' own mean.
    fn central(&self) -> (f64, f64, f64) {
        let d = self.s1 / self.n;
        let m2 = self.s2 / self.n - d * d;
        let m3 = self.s3 / self.n - 3.0 * d * self.s2 / self.n + 2.0 * d * d * d;
        (d, m2.max(0.0), m3)
    }

    fn skewness(&self) -> Option<f64> {
        let (_, m2, m3) = self.central();
        (m2 > 0.0).then(|| m3 / m2.powf(1.5))
    }
}

fn standard_error(values: &[f64]) -> Option<f64> {
    let r = values.len();
    if r < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64;
    Some((var / r as f64).sqrt())
}

pub fn moments<A: AsRef<[f64]> + Sync>(batch: &[A]) -> Result<MomentReport> {
    let count: usize = batch.iter().map(|a| a.as_ref().len()).sum();
    if count == 0 {
        return Err(Error::InvalidInput("moments of an empty batch".into()));
    }
    let total: f64 = batch.iter().map(|a| a.as_ref().iter().sum::<f64>()).sum();
    let shift = total / count as f64;
    let per: Vec<Sums> = batch.par_iter().map(|a| Sums::of(a.as_ref(), shift)).collect();
    let mut pooled = Sums::default();
    for s in &per {
        pooled.add(s);
    }
    let (offset, m2, _) = pooled.central();
    let n = count as f64;
    let mean = shift + offset;
    let variance = if count > 1 { m2 * n / (n - 1.0) } else { 0.0 };
    let skewness = if count >= 3 { pooled.skewness() } else { None };

    let nonempty: Vec<&Sums> = per.iter().filter(|s| s.n > 0.0).collect();
    let sample_means: Vec<f64> = nonempty.iter().map(|s| shift + s.s1 / s.n).collect();
    let sample_vars: Vec<f64> = nonempty.iter().map(|s| s.s2 / s.n - (s.s1 / s.n).powi(2)).collect();
    let sample_sq: Vec<f64> = nonempty.iter().map(|s| s.raw2 / s.n).collect();

    let standard_error_skewness = if skewness.is_some() && nonempty.len() >= 2 {
        let mut rng = ChaCha20Rng::seed_from_u64(BOOTSTRAP_SEED);
        let draws: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
            .filter_map(|_| {
                let mut acc = Sums::default();
                for _ in 0..nonempty.len() {
                    acc.add(nonempty[rng.random_range(0..nonempty.len())]);
                }
                acc.skewness()
            })
            .collect();
        standard_error(&draws).map(|se| se * (draws.len() as f64).sqrt())
    } else {
        None
    };

    Ok(MomentReport {
        mean,
        variance,
        skewness,
        second_moment: pooled.raw2 / n,
        standard_error_mean: standard_error(&sample_means),
        standard_error_variance: standard_error(&sample_vars),
        standard_error_second_moment: standard_error(&sample_sq),
        standard_error_skewness,
        count,
        replicates: batch.len(),
    })
}

fn is_power_of_two(a: usize) -> bool {
    a >= 1 && a & (a - 1) == 0
}

/// Grid strides `(a^beta1, a^beta2)` of the rescaling by `a`.
///
/// `a` must be a power of two. Strides must be integers dividing `M`;
/// otherwise the rescaled points fall between grid nodes and the call is
/// refused.
pub fn rescale_strides(params: &FieldParams, grid: GridSpec, factor: usize) -> Result<(usize, usize)> {
    let m = grid.resolution();
    if !is_power_of_two(factor) {
        return Err(Error::RescaleFactor { factor, reason: "not a power of two".into() });
    }
    let a = factor as f64;
    let mut strides = [0usize; 2];
    for (stride, beta) in strides.iter_mut().zip(params.betas()) {
        let s = a.powf(beta);
        let rounded = s.round();
        if (s - rounded).abs() > 1e-9 || rounded < 1.0 {
            return Err(Error::RescaleFactor {
                factor,
                reason: format!("stride {s} along an axis with beta {beta} is not an integer"),
            });
        }
        *stride = rounded as usize;
        if m % *stride != 0 {
            return Err(Error::RescaleFactor { factor, reason: format!("stride {stride} does not divide {m}") });
        }
    }
    Ok((strides[0], strides[1]))
}

/// `a^(-2H) X(a^D k / M)` on the sub-grid that stays inside `[0, 1]²`, with
/// `D = diag(beta1, beta2)` (identity when isotropic).
pub fn rescaled_field(sample: &FieldSample, factor: usize) -> Result<Grid2> {
    let m = sample.grid.resolution();
    let strides = rescale_strides(&sample.params, sample.grid, factor)?;
    let scale = (factor as f64).powf(-2.0 * sample.params.hurst());
    let rows = m / strides.0 + 1;
    let cols = m / strides.1 + 1;
    let mut values = Vec::with_capacity(rows * cols);
    for k1 in 0..rows {
        for k2 in 0..cols {
            values.push(scale * sample.get(strides.0 * k1, strides.1 * k2));
        }
    }
    Ok(Grid2 { rows, cols, values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginVariance {
    pub origin: (usize, usize),
    /// Mean of `ΔX²` across the batch.
    pub variance: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagStationarity {
    pub lag: (usize, usize),
    pub origins: Vec<OriginVariance>,
    /// Index pairs into `origins` whose variances differ by more than
    /// [`STATIONARITY_FLAG_SE`] pooled standard errors.
    pub flagged: Vec<(usize, usize)>,
}

/// Flag threshold of the stationarity check, in pooled standard errors.
pub const STATIONARITY_FLAG_SE: f64 = 4.0;

/// Compares second moments of several groups of centered draws.
pub fn compare_second_moments(groups: &[Vec<f64>]) -> (Vec<(f64, f64)>, Vec<(usize, usize)>) {
    let stats: Vec<(f64, f64)> = groups
        .iter()
        .map(|g| {
            let sq: Vec<f64> = g.iter().map(|v| v * v).collect();
            let mean = sq.iter().sum::<f64>() / sq.len() as f64;
            (mean, standard_error(&sq).unwrap_or(f64::INFINITY))
        })
        .collect();
    let mut flagged = Vec::new();
    for i in 0..stats.len() {
        for j in i + 1..stats.len() {
            let pooled = (stats[i].1.powi(2) + stats[j].1.powi(2)).sqrt();
            if (stats[i].0 - stats[j].0).abs() > STATIONARITY_FLAG_SE * pooled {
                flagged.push((i, j));
            }
        }
    }
    (stats, flagged)
}

/// Increment at one origin of one field.
pub fn increment_at(sample: &FieldSample, origin: (usize, usize), lag: (usize, usize)) -> Result<f64> {
    let m = sample.grid.resolution();
    let (k1, k2) = origin;
    if k1 + lag.0 > m || k2 + lag.1 > m {
        return Err(Error::LagOutOfRange { lag1: k1 + lag.0, lag2: k2 + lag.1, resolution: m });
    }
    Ok(sample.get(k1 + lag.0, k2 + lag.1) - sample.get(k1, k2 + lag.1) - sample.get(k1 + lag.0, k2) + sample.get(k1, k2))
}

/// Minimum batch size for [`stationarity_check`].
pub const MIN_STATIONARITY_SAMPLES: usize = 30;

pub fn stationarity_check(
    batch: &[FieldSample],
    lags: &[(usize, usize)],
    origins: &[(usize, usize)],
) -> Result<Vec<LagStationarity>> {
    if batch.len() < MIN_STATIONARITY_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "stationarity check needs at least {MIN_STATIONARITY_SAMPLES} samples, got {}",
            batch.len()
        )));
    }
    lags.iter()
        .map(|&lag| {
            let groups: Vec<Vec<f64>> = origins
                .iter()
                .map(|&o| batch.iter().map(|s| increment_at(s, o, lag)).collect::<Result<_>>())
                .collect::<Result<_>>()?;
            let (stats, flagged) = compare_second_moments(&groups);
            Ok(LagStationarity {
                lag,
                origins: origins
                    .iter()
                    .zip(stats)
                    .map(|(&origin, (variance, standard_error))| OriginVariance { origin, variance, standard_error })
                    .collect(),
                flagged,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagBound {
    pub lag: (usize, usize),
    /// Physical lag `L / M`.
    pub h: (f64, f64),
    /// `c1 (max^(1-alpha) min^(1+alpha))^(2H)`.
    pub bound: f64,
    /// Mean of `ΔX²` over all origins and samples.
    pub empirical: f64,
    pub standard_error: f64,
    /// `bound / empirical`; infinite when the empirical value is zero.
    pub ratio: f64,
    /// `empirical <= bound + BOUND_SLACK_SE * standard_error`.
    pub satisfied: bool,
}

/// Slack of the bound check, in standard errors.
pub const BOUND_SLACK_SE: f64 = 3.0;

pub fn bound_check(batch: &[FieldSample], params: &FieldParams, lags: &[(usize, usize)], c1: f64) -> Result<Vec<LagBound>> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("bound check of an empty batch".into()));
    }
    let m = batch[0].grid.resolution();
    lags.iter()
        .map(|&(l1, l2)| {
            let per_sample: Vec<f64> = batch
                .par_iter()
                .map(|s| {
                    let inc = rectangular_increment(s, l1, l2)?;
                    let v = &inc.values.values;
                    Ok(v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64)
                })
                .collect::<Result<_>>()?;
            let empirical = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
            let standard_error = standard_error(&per_sample).unwrap_or(0.0);
            let h = (l1 as f64 / m as f64, l2 as f64 / m as f64);
            let bound = c1 * bound_shape(h.0, h.1, params);
            let ratio = if empirical == 0.0 { f64::INFINITY } else { bound / empirical };
            Ok(LagBound {
                lag: (l1, l2),
                h,
                bound,
                empirical,
                standard_error,
                ratio,
                satisfied: empirical <= bound + BOUND_SLACK_SE * standard_error,
            })
        })
        .collect()
}

/// The three populations of the moment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub field: MomentReport,
    pub increments: MomentReport,
    pub rescaled: MomentReport,
    pub lag: (usize, usize),
    pub rescale_factor: usize,
}

pub fn moment_table(batch: &[FieldSample], lag: (usize, usize), rescale_factor: usize) -> Result<MomentTable> {
    let fields: Vec<&[f64]> = batch.iter().map(|s| s.values.as_slice()).collect();
    let increments: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|s| rectangular_increment(s, lag.0, lag.1).map(|i| i.values.values))
        .collect::<Result<_>>()?;
    let rescaled: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|s| rescaled_field(s, rescale_factor).map(|g| g.values))
        .collect::<Result<_>>()?;
    Ok(MomentTable {
        field: moments(&fields)?,
        increments: moments(&increments)?,
        rescaled: moments(&rescaled)?,
        lag,
        rescale_factor,
    })
}

/// Exact pooled second moments of the three moment-table populations under
/// the generator's law, in the order field, increments, rescaled.
pub fn expected_second_moments(params: &FieldParams, grid: GridSpec, lag: (usize, usize), rescale_factor: usize) -> Result<[f64; 3]> {
    let m = grid.resolution();
    if lag.0 > m || lag.1 > m {
        return Err(Error::LagOutOfRange { lag1: lag.0, lag2: lag.1, resolution: m });
    }
    let all: Vec<usize> = (0..=m).collect();
    let field = mean_discrete_variance(params, grid, &all, &all);
    let increments = discrete_variance(params, grid, lag);
    let (s1, s2) = rescale_strides(params, grid, rescale_factor)?;
    let rows: Vec<usize> = (0..=m / s1).map(|k| k * s1).collect();
    let cols: Vec<usize> = (0..=m / s2).map(|k| k * s2).collect();
    let scale = (rescale_factor as f64).powf(-4.0 * params.hurst());
    let rescaled = scale * mean_discrete_variance(params, grid, &rows, &cols);
    Ok([field, increments, rescaled])
}
