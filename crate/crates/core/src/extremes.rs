//! Extreme-value statistics of sampled membrane fields: the centering `m_N`,
//! recentred maxima, the `Z_N` statistic, tail slopes and two-sample
//! Kolmogorov–Smirnov distances.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Field;
use crate::report::{num, Csv};
use crate::sampler::SampleBatch;

/// `m_N = π^-1 log N - (3/(16π)) log log N`.
pub fn centering(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::invalid(format!(
            "centering needs N >= 3 so that log log N > 0, got {n}"
        )));
    }
    let l = (n as f64).ln();
    Ok(l / PI - 3.0 / (16.0 * PI) * l.ln())
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `Z_N = √8 Σ_v (log N - π ψ_v) e^{-8 (log N - π ψ_v)}`.
pub fn z_statistic(field: &Field) -> f64 {
    let log_n = (field.grid().n() as f64).ln();
    let total = compensated_sum(field.values().iter().map(|&psi| {
        let d = log_n - PI * psi;
        d * (-8.0 * d).exp()
    }));
    8f64.sqrt() * total
}

/// `M - m_N` per sample.
pub fn recentred_max(batch: &SampleBatch) -> Result<Vec<f64>> {
    if batch.samples.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let m = centering(batch.n)?;
    Ok(batch.samples.iter().map(|s| s.max - m).collect())
}

/// Least-squares slope of the log empirical CCDF over the upper quartile.
pub fn tail_slope(values: &[f64]) -> Result<f64> {
    if values.len() < 100 {
        return Err(Error::invalid(format!(
            "tail slope needs at least 100 values, got {}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let m = sorted.len() as f64;
    let top = sorted.len() / 4;
    // i-th largest value has empirical exceedance (i - 1/2)/m
    let pts: Vec<(f64, f64)> = sorted[..top]
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, ((i as f64 + 0.5) / m).ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) {
        return Err(Error::invalid("degenerate upper tail: values are constant"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

/// `sup_x |F_a(x) - F_b(x)|` of the two empirical distribution functions.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS distance needs two nonempty samples"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub n: usize,
    pub samples: usize,
    pub centering: f64,
    /// Mean of `M - m_N`.
    pub mean: f64,
    pub variance: f64,
    pub quantiles: Vec<(f64, f64)>,
    pub z_mean: f64,
    pub z_positive_fraction: f64,
    pub tail_slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsEntry {
    pub n_a: usize,
    pub n_b: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremesReport {
    pub levels: Vec<LevelStats>,
    /// Between consecutive entries of `levels`.
    pub ks: Vec<KsEntry>,
}

pub fn level_stats(batch: &SampleBatch) -> Result<LevelStats> {
    let r = recentred_max(batch)?;
    let k = r.len() as f64;
    let mean = r.iter().sum::<f64>() / k;
    let variance = if r.len() > 1 {
        r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    let mut sorted = r.clone();
    sorted.sort_by(f64::total_cmp);
    let z = batch.z_values();
    Ok(LevelStats {
        n: batch.n,
        samples: r.len(),
        centering: centering(batch.n)?,
        mean,
        variance,
        quantiles: QUANTILE_LEVELS
            .iter()
            .map(|&p| (p, quantile(&sorted, p)))
            .collect(),
        z_mean: z.iter().sum::<f64>() / k,
        z_positive_fraction: z.iter().filter(|&&v| v > 0.0).count() as f64 / k,
        tail_slope: tail_slope(&r).ok(),
    })
}

pub fn extremes_report(batches: &[SampleBatch]) -> Result<ExtremesReport> {
    let levels = batches
        .iter()
        .map(level_stats)
        .collect::<Result<Vec<_>>>()?;
    let mut ks = Vec::new();
    for pair in batches.windows(2) {
        ks.push(KsEntry {
            n_a: pair[0].n,
            n_b: pair[1].n,
            distance: ks_two_sample(&recentred_max(&pair[0])?, &recentred_max(&pair[1])?)?,
        });
    }
    Ok(ExtremesReport { levels, ks })
}

/// Equal-width histogram as CSV `(bin_lo, bin_hi, count)`.
pub fn histogram(values: &[f64], bins: usize) -> Result<Csv> {
    if values.is_empty() || bins == 0 {
        return Err(Error::invalid(
            "histogram needs values and at least one bin",
        ));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let mut csv = Csv::new(["bin_lo", "bin_hi", "count"]);
    for (b, c) in counts.iter().enumerate() {
        csv.push([
            num(lo + b as f64 * width),
            num(lo + (b + 1) as f64 * width),
            c.to_string(),
        ]);
    }
    Ok(csv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GridSpec;
    use crate::sampler::{summarize, SampleSummary};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn centering_values() {
        assert!((centering(3).unwrap() - 0.344086086).abs() < 1e-9);
        assert!((centering(100).unwrap() - 1.374724378).abs() < 1e-9);
        assert!(centering(2).is_err());
        for n in [3usize, 10, 57] {
            let ln = (n as f64).ln();
            let lhs = centering(n * n).unwrap() - 2.0 * centering(n).unwrap()
                + 3.0 / (16.0 * PI) * ((2.0 * ln).ln() - 2.0 * ln.ln());
            assert!(lhs.abs() < 1e-14);
        }
    }

    #[test]
    fn z_statistic_closed_forms() {
        let grid = GridSpec::new(4).unwrap();
        let zero = Field::zeros(grid);
        let ln = 4f64.ln();
        let want = 8f64.sqrt() * 625.0 * ln * 4f64.powi(-8);
        assert!((z_statistic(&zero) - want).abs() < 1e-15 * want);
        let critical = Field::constant(grid, ln / PI);
        assert!(z_statistic(&critical).abs() < 1e-12);
    }

    fn batch_of(n: usize, fields: &[Field]) -> SampleBatch {
        SampleBatch {
            n,
            seed: 0,
            count: fields.len(),
            tolerance: 0.0,
            samples: fields
                .iter()
                .enumerate()
                .map(|(i, f)| summarize(i as u64, f, 0))
                .collect(),
            fields: None,
        }
    }

    #[test]
    fn recentring_bookkeeping() {
        let grid = GridSpec::new(16).unwrap();
        let zero = batch_of(16, &[Field::zeros(grid)]);
        assert_eq!(recentred_max(&zero).unwrap(), vec![-centering(16).unwrap()]);

        let f = Field::from_fn(grid, |s| ((s.0[0] * 7 + s.0[2] * 3) % 5) as f64 * 0.1);
        let shifted = f.map(|v| v + 0.75);
        let a = recentred_max(&batch_of(16, std::slice::from_ref(&f))).unwrap();
        let b = recentred_max(&batch_of(16, &[shifted])).unwrap();
        assert!((b[0] - a[0] - 0.75).abs() < 1e-14);
        let batch = batch_of(16, &[f.clone(), f.map(|v| 2.0 * v)]);
        let r = recentred_max(&batch).unwrap();
        let m = centering(16).unwrap();
        let top = r.iter().copied().fold(f64::NEG_INFINITY, f64::max) + m;
        assert_eq!(
            top,
            batch.maxima().into_iter().fold(f64::NEG_INFINITY, f64::max)
        );
        assert!(r[1] >= r[0]);
    }

    fn gumbel(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        -scale * (-u.ln()).ln()
    }

    #[test]
    fn tail_slope_on_gumbel_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..4000).map(|_| gumbel(&mut rng, 1.0)).collect();
        assert!((tail_slope(&v).unwrap() + 1.0).abs() <= 0.3);
        let s = 1.0 / (8.0 * PI);
        let v: Vec<f64> = (0..4000).map(|_| gumbel(&mut rng, s)).collect();
        let slope = tail_slope(&v).unwrap();
        assert!((slope + 8.0 * PI).abs() <= 0.3 * 8.0 * PI);
        assert!(tail_slope(&vec![1.5; 200]).is_err());
        assert!(tail_slope(&[1.0; 50]).is_err());
    }

    #[test]
    fn ks_distance_examples() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 1.0);
        let d = ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5]).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn report_and_histogram() {
        let grid = GridSpec::new(4).unwrap();
        let mk = |k: f64| Field::from_fn(grid, move |s| ((s.0[1] as f64) * k).sin());
        let a = batch_of(4, &[mk(0.3), mk(0.7), mk(1.1)]);
        let b = batch_of(8, &[mk(0.2), mk(0.9)]);
        let _ = SampleSummary::clone(&a.samples[0]);
        let rep = extremes_report(&[a.clone(), b]).unwrap();
        assert_eq!(rep.ks.len(), 1);
        assert!((0.0..=1.0).contains(&rep.ks[0].distance));
        let q: Vec<f64> = rep.levels[0].quantiles.iter().map(|p| p.1).collect();
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
        let csv = histogram(&recentred_max(&a).unwrap(), 4).unwrap();
        assert_eq!(csv.len(), 4);
    }
}
