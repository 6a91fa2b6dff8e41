//! Exact samples of the membrane field `ψ_N ~ N(0, G_N)` on `V_N`.
//!
//! With `Δ_1` mapping fields on `V_N` to the box dilated by one layer, the
//! precision is `Q = Δ_1ᵀ Δ_1 = A`. For i.i.d. standard normals `ξ` on the
//! dilated box, `ψ = A^{-1} Δ_1ᵀ ξ` has covariance `A^{-1}`.
//!
//! Normals come from ChaCha8 with the sample index as the stream id and a
//! fixed two words per site, so every value is a function of
//! `(seed, sample, site)` alone.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremes::z_statistic;
use crate::greens::solver::{solve_lattice, SolveStats, DEFAULT_MAX_ITERATIONS};
use crate::lattice::{Field, GridSpec, DIM};
use crate::report::{num, Csv};

pub const DEFAULT_SAMPLE_TOL: f64 = 1e-6;

/// Standard normal from two uniform words (Box–Muller, cosine branch).
fn normal(a: u64, b: u64) -> f64 {
    // (0, 1] so the logarithm is finite
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// I.i.d. normals on `[-1, n+1]^4`, lexicographic order.
pub fn white_noise(grid: GridSpec, seed: u64, index: u64) -> Vec<f64> {
    let side = grid.n() + 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    (0..side.pow(DIM as u32))
        .map(|_| {
            let a = rng.next_u64();
            let b = rng.next_u64();
            normal(a, b)
        })
        .collect()
}

/// `Δ_1ᵀ ξ = Δ_1 ξ` on the box sites, for `ξ` on the dilated box.
fn noise_divergence(grid: GridSpec, xi: &[f64]) -> Vec<f64> {
    let s = grid.n() + 3;
    let strides = [s * s * s, s * s, s, 1];
    grid.sites()
        .map(|site| {
            let c = site.coords();
            let i: usize = (0..DIM).map(|k| (c[k] + 1) as usize * strides[k]).sum();
            let mut v = -8.0 * xi[i];
            for st in strides {
                v += xi[i + st] + xi[i - st];
            }
            v
        })
        .collect()
}

/// One sample with stream `index` of `seed`.
pub fn sample_field_stream(
    grid: GridSpec,
    seed: u64,
    index: u64,
    tol: f64,
) -> Result<(Field, SolveStats)> {
    let b = noise_divergence(grid, &white_noise(grid, seed, index));
    let (psi, stats) = solve_lattice(grid, &b, tol, DEFAULT_MAX_ITERATIONS)?;
    if !stats.converged {
        return Err(Error::NotConverged {
            iterations: stats.iterations,
            residual: stats.residual,
        });
    }
    Ok((Field::from_values(grid, psi)?, stats))
}

/// The sample with stream 0.
pub fn sample_field(grid: GridSpec, seed: u64, tol: f64) -> Result<Field> {
    Ok(sample_field_stream(grid, seed, 0, tol)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub index: u64,
    /// `M_N = max_v ψ_v`.
    pub max: f64,
    /// Lexicographically first site attaining the maximum.
    pub argmax: [i64; DIM],
    pub z: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub n: usize,
    pub seed: u64,
    pub count: usize,
    pub tolerance: f64,
    pub samples: Vec<SampleSummary>,
    #[serde(skip)]
    pub fields: Option<Vec<Field>>,
}

impl SampleBatch {
    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.n).expect("batch grid is valid")
    }

    pub fn maxima(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.max).collect()
    }

    pub fn z_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.z).collect()
    }

    /// Columns `(index, M, argmax coords, Z_N)`.
    pub fn to_csv(&self) -> Csv {
        let mut csv = Csv::new(["index", "max", "x1", "x2", "x3", "x4", "z"]);
        for s in &self.samples {
            let a = s.argmax;
            csv.push([
                s.index.to_string(),
                num(s.max),
                a[0].to_string(),
                a[1].to_string(),
                a[2].to_string(),
                a[3].to_string(),
                num(s.z),
            ]);
        }
        csv
    }
}

pub fn summarize(index: u64, field: &Field, iterations: usize) -> SampleSummary {
    let (max, site) = field.argmax();
    SampleSummary {
        index,
        max,
        argmax: site.coords(),
        z: z_statistic(field),
        iterations,
    }
}

/// `count` independent samples; the result does not depend on the thread
/// schedule.
pub fn sample_batch(
    grid: GridSpec,
    seed: u64,
    count: usize,
    tol: f64,
    keep_fields: bool,
) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let results = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let (field, stats) = sample_field_stream(grid, seed, i, tol)?;
            let summary = summarize(i, &field, stats.iterations);
            Ok((summary, keep_fields.then_some(field)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::with_capacity(count);
    let mut fields = keep_fields.then(Vec::new);
    for (s, f) in results {
        samples.push(s);
        if let (Some(fs), Some(f)) = (fields.as_mut(), f) {
            fs.push(f);
        }
    }
    Ok(SampleBatch {
        n: grid.n(),
        seed,
        count,
        tolerance: tol,
        samples,
        fields,
    })
}
