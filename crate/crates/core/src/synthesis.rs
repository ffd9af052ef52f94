//! Spectral-representation generator.
//!
//! A `2M × 2M` array of complex Gaussian noise `W(n1, n2)`, `n ∈ {-M+1, …, M}`,
//! is weighted by `g(πn1, πn2)`, transformed along `n2` (keeping
//! `k2 ∈ {0, …, M}` and subtracting the `k2 = 0` column), then transformed
//! along `n1` with a factor `π` (subtracting the `k1 = 0` row). The real part
//! is the field at `(k1/M, k2/M)`. In closed form
//!
//! ```text
//! x(k1/M, k2/M) = Re π Σ W(n) g(πn) (e^{-iπ n1 k1/M} - 1)(e^{-iπ n2 k2/M} - 1)
//! ```
//!
//! Negative indices are stored at `n + 2M`; the twiddle factor
//! `e^{-2iπ nk/(2M)}` is `2M`-periodic in `n`, so a plain length-`2M` forward
//! DFT needs no phase correction.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::params::{FieldParams, GridSpec};
use crate::spectral::{amplitude, FrequencyPoint};

/// Tag recorded in manifests. Bump whenever the noise stream changes.
pub const NOISE_CONVENTION: &str = "chacha20-row-stream/ziggurat-normal/re-im-unit-variance/v1";

/// Complex noise `W(n1, n2)`; real and imaginary parts are independent
/// standard normals, so `E|W|² = 2`.
///
/// Row `n1` is drawn from ChaCha20 seeded with `seed` on stream
/// `n1 + M - 1`, consuming `(re, im)` pairs for `n2 = -M+1, …, M` in order.
/// Rows are therefore independent of the order in which they are generated.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexNoise {
    grid: GridSpec,
    seed: u64,
    values: Vec<Complex64>,
}

impl ComplexNoise {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row-major over storage slots `(n1 mod 2M, n2 mod 2M)`.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Draw at signed indices `(n1, n2)`.
    pub fn at(&self, n1: i64, n2: i64) -> Complex64 {
        let len = self.grid.noise_len();
        self.values[self.grid.slot(n1) * len + self.grid.slot(n2)]
    }
}

pub fn sample_noise(grid: GridSpec, seed: u64) -> ComplexNoise {
    let len = grid.noise_len();
    let mut values = vec![Complex64::new(0.0, 0.0); len * len];
    let m = grid.resolution() as i64;
    values.par_chunks_mut(len).enumerate().for_each(|(slot1, row)| {
        let n1 = grid.signed_index(slot1);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream((n1 + m - 1) as u64);
        for n2 in grid.noise_indices() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            row[grid.slot(n2)] = Complex64::new(re, im);
        }
    });
    ComplexNoise { grid, seed, values }
}

/// One synthesized field on the `(M+1) × (M+1)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub params: FieldParams,
    pub grid: GridSpec,
    pub seed: u64,
    /// Row-major, `values[k1 * (M + 1) + k2]` is the field at `(k1/M, k2/M)`.
    pub values: Vec<f64>,
}

impl FieldSample {
    pub fn side(&self) -> usize {
        self.grid.points_per_axis()
    }

    pub fn get(&self, k1: usize, k2: usize) -> f64 {
        self.values[k1 * self.side() + k2]
    }
}

/// `g(πn1, πn2)` over storage slots, row-major.
pub fn amplitude_table(params: &FieldParams, grid: GridSpec) -> Vec<f64> {
    let len = grid.noise_len();
    let mut table = vec![0.0; len * len];
    table.par_chunks_mut(len).enumerate().for_each(|(s1, row)| {
        let xi1 = PI * grid.signed_index(s1) as f64;
        for (s2, g) in row.iter_mut().enumerate() {
            let xi2 = PI * grid.signed_index(s2) as f64;
            *g = amplitude(params, FrequencyPoint::new(xi1, xi2));
        }
    });
    table
}

pub fn synthesize(params: &FieldParams, grid: GridSpec, seed: u64) -> FieldSample {
    let noise = sample_noise(grid, seed);
    synthesize_from_noise(params, &noise)
}

/// Runs the two Fourier passes on a given noise array.
pub fn synthesize_from_noise(params: &FieldParams, noise: &ComplexNoise) -> FieldSample {
    let grid = noise.grid();
    let len = grid.noise_len();
    let side = grid.points_per_axis();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let amplitudes = amplitude_table(params, grid);

    // pass 1: along n2, for every n1
    let mut rows: Vec<Complex64> = noise
        .values()
        .par_iter()
        .zip(amplitudes.par_iter())
        .map(|(w, g)| w * g)
        .collect();
    rows.par_chunks_mut(len).for_each_init(
        || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
        |scratch, row| {
            fft.process_with_scratch(row, scratch);
            let origin = row[0];
            for v in row[..side].iter_mut() {
                *v -= origin;
            }
        },
    );

    // pass 2: along n1, for every retained k2
    let mut columns = vec![Complex64::new(0.0, 0.0); side * len];
    columns.par_chunks_mut(len).enumerate().for_each(|(k2, col)| {
        for (s1, c) in col.iter_mut().enumerate() {
            *c = rows[s1 * len + k2];
        }
    });
    columns.par_chunks_mut(len).for_each_init(
        || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
        |scratch, col| fft.process_with_scratch(col, scratch),
    );

    let mut values = vec![0.0; side * side];
    values.par_chunks_mut(side).enumerate().for_each(|(k1, out)| {
        for (k2, v) in out.iter_mut().enumerate() {
            let col = &columns[k2 * len..(k2 + 1) * len];
            *v = (PI * (col[k1] - col[0])).re;
        }
    });

    FieldSample { params: *params, grid, seed: noise.seed(), values }
}

/// Seed of sample `index` in a batch: the SplitMix64 output for state
/// `base_seed + (index + 1) * 0x9E3779B97F4A7C15`.
pub fn derived_seed(base_seed: u64, index: u64) -> u64 {
    let mut z = base_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn synthesize_batch(params: &FieldParams, grid: GridSpec, base_seed: u64, count: usize) -> Vec<FieldSample> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| synthesize(params, grid, derived_seed(base_seed, i)))
        .collect()
}
