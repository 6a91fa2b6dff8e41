//! Numerical instances of the Green's function estimates B0–B3, the
//! discrete Poincaré and Poincaré–Sobolev inequalities, the easy pointwise
//! bound on `G_h`, and the closeness experiment for regular parts.
//!
//! Everything here is an empirical measurement: constants are computed from
//! solved Green columns and reported, never assumed.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::greens::{
    column_digest, continuous_fullspace, shifted_fullspace, ColumnSource, FullSpaceGreen,
    GreenColumn, LAMBDA_SQ,
};
use crate::lattice::{cutoff_profile, norms, Field, GridSpec, Site, DIM};

/// Stand-in exponent for the polylog distance threshold of B2.
pub const THETA: f64 = 3.0;
/// Minimal `r / h` at which the closeness bound applies.
pub const CLOSENESS_MIN_RATIO: f64 = 192.0;

fn lattice_distance(a: Site, b: Site) -> f64 {
    a.distance(b)
}

fn combined_digest<'a>(digests: impl IntoIterator<Item = &'a String>) -> String {
    let mut hasher = Sha256::new();
    for d in digests {
        hasher.update(d.as_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Columns for `sources`, solved in parallel.
fn columns(
    source: &ColumnSource,
    grid: GridSpec,
    sites: &[Site],
    tol: f64,
) -> Result<BTreeMap<Site, GreenColumn>> {
    let mut unique = sites.to_vec();
    unique.sort();
    unique.dedup();
    let cols = unique
        .par_iter()
        .map(|&s| source.column(grid, s, tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(unique.into_iter().zip(cols).collect())
}

// ---------------------------------------------------------------------------
// B0

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct B0Site {
    pub site: Site,
    pub boundary_distance: i64,
    /// `λ² G_h(x, x)`.
    pub lambda2_g: f64,
    /// `λ² G_h(x, x) + log h`.
    pub shifted: f64,
    /// `λ² G_h(x, x) / log(2 + d(x)/h)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct B0Report {
    pub n: usize,
    pub tolerance: f64,
    pub alpha_0: f64,
    /// Which inequality sets `alpha_0`: "log-h", "log-distance",
    /// "difference" or "nonnegative".
    pub binding: String,
    pub sites: Vec<B0Site>,
    /// `max_{x≠y} (λ²(G(x,x) - G(x,y)) - log(1 + |x-y|/h)) / 2`.
    pub difference_term: f64,
    pub columns_sha256: String,
}

/// Center, quarter points and near-boundary sites.
pub fn default_b0_sites(grid: GridSpec) -> Vec<Site> {
    let n = grid.n() as i64;
    let (m, q) = (n / 2, n / 4);
    let mut sites = vec![
        Site([m; DIM]),
        Site([q, m, m, m]),
        Site([q; DIM]),
        Site([1, m, m, m]),
        Site([2, m, m, m]),
        Site([1, 1, 1, 1]),
        Site([0, m, m, m]),
    ];
    sites.dedup();
    sites
}

/// Smallest `α₀'` satisfying both single-site inequalities of B0 and the
/// difference inequality over all pairs of `sites`.
pub fn check_b0(
    source: &ColumnSource,
    grid: GridSpec,
    sites: &[Site],
    tol: f64,
) -> Result<B0Report> {
    if sites.is_empty() {
        return Err(Error::invalid("check_b0 needs at least one site"));
    }
    for s in sites {
        grid.index_of(*s).ok_or(Error::OutsideBox(s.0, grid.n()))?;
    }
    let cols = columns(source, grid, sites, tol)?;
    let h = grid.h();
    let mut alpha = 0.0f64;
    let mut binding = "nonnegative".to_string();
    let mut bump = |v: f64, name: &str| {
        if v > alpha {
            alpha = v;
            binding = name.to_string();
        }
    };
    let mut rows = Vec::new();
    for (&x, col) in &cols {
        let g = LAMBDA_SQ * col.at(x);
        let d = grid.boundary_distance(x);
        let row = B0Site {
            site: x,
            boundary_distance: d,
            lambda2_g: g,
            shifted: g + h.ln(),
            ratio: g / (2.0 + d as f64).ln(),
        };
        bump(row.shifted, "log-h");
        bump(row.ratio, "log-distance");
        rows.push(row);
    }
    let mut difference = f64::NEG_INFINITY;
    for (&x, col) in &cols {
        let gxx = col.at(x);
        for &y in cols.keys() {
            if y != x {
                let lhs = LAMBDA_SQ * (gxx - col.at(y));
                let v = (lhs - (1.0 + lattice_distance(x, y)).ln()) / 2.0;
                difference = difference.max(v);
            }
        }
    }
    if difference.is_finite() {
        bump(difference, "difference");
    }
    let digests: Vec<String> = cols.values().map(column_digest).collect();
    Ok(B0Report {
        n: grid.n(),
        tolerance: tol,
        alpha_0: alpha,
        binding,
        sites: rows,
        difference_term: difference.max(f64::MIN),
        columns_sha256: combined_digest(&digests),
    })
}

// ---------------------------------------------------------------------------
// B1

/// Stratification of site pairs by distance and by boundary distance, both on
/// logarithmic scales normalized to the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPlan {
    pub distance_bins: usize,
    pub boundary_bins: usize,
    pub per_cell: usize,
    pub seed: u64,
    pub max_attempts: usize,
}

impl PairPlan {
    pub fn standard(seed: u64) -> Self {
        Self {
            distance_bins: 6,
            boundary_bins: 4,
            per_cell: 8,
            seed,
            max_attempts: 200_000,
        }
    }

    /// `ln(1 + |x-y|) / ln(1 + 2n)` binned.
    pub fn distance_bin(&self, grid: GridSpec, dist: f64) -> usize {
        let u = (1.0 + dist).ln() / (1.0 + 2.0 * grid.n() as f64).ln();
        ((u * self.distance_bins as f64) as usize).min(self.distance_bins - 1)
    }

    /// `ln(1 + max d) / ln(1 + n/2)` binned.
    pub fn boundary_bin(&self, grid: GridSpec, d: i64) -> usize {
        let v = (1.0 + d as f64).ln() / (1.0 + grid.n() as f64 / 2.0).ln();
        ((v * self.boundary_bins as f64) as usize).min(self.boundary_bins - 1)
    }

    /// Lattice boundary distances falling into boundary bin `j`.
    fn boundary_range(&self, grid: GridSpec, j: usize) -> Vec<i64> {
        (0..=(grid.n() as i64 / 2))
            .filter(|&d| self.boundary_bin(grid, d) == j)
            .collect()
    }

    /// Deterministic pair list, cell by cell. Cells that cannot be filled
    /// within `max_attempts` draws keep fewer pairs.
    pub fn pairs(&self, grid: GridSpec) -> Vec<PlannedPair> {
        let n = grid.n() as i64;
        let mut out = Vec::new();
        for i in 0..self.distance_bins {
            for j in 0..self.boundary_bins {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream((i * self.boundary_bins + j) as u64);
                let ds = self.boundary_range(grid, j);
                if ds.is_empty() {
                    continue;
                }
                let lo = i as f64 / self.distance_bins as f64;
                let hi = (i + 1) as f64 / self.distance_bins as f64;
                let log_span = (1.0 + 2.0 * n as f64).ln();
                let mut found = 0;
                for _ in 0..self.max_attempts {
                    if found == self.per_cell {
                        break;
                    }
                    // x with a boundary distance from the cell's range
                    let d = ds[rng.gen_range(0..ds.len())];
                    let mut c = [0i64; DIM];
                    for v in c.iter_mut() {
                        *v = rng.gen_range(d..=n - d);
                    }
                    let axis = rng.gen_range(0..DIM);
                    c[axis] = if rng.gen::<bool>() { d } else { n - d };
                    let x = Site(c);
                    // y at a log-uniform distance in the cell's range
                    let rho = (rng.gen_range(lo..hi) * log_span).exp() - 1.0;
                    let dir = loop {
                        let v: [f64; DIM] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
                        if norm > 1e-3 && norm <= 1.0 {
                            break v.map(|t| t / norm);
                        }
                    };
                    let y = Site(std::array::from_fn(|k| {
                        (c[k] as f64 + rho * dir[k]).round() as i64
                    }));
                    if !grid.contains(y.0) {
                        continue;
                    }
                    let dmax = grid.boundary_distance(x).max(grid.boundary_distance(y));
                    if self.distance_bin(grid, x.distance(y)) != i
                        || self.boundary_bin(grid, dmax) != j
                    {
                        continue;
                    }
                    out.push(PlannedPair {
                        x,
                        y,
                        distance_bin: i,
                        boundary_bin: j,
                    });
                    found += 1;
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedPair {
    pub x: Site,
    pub y: Site,
    pub distance_bin: usize,
    pub boundary_bin: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDeviation {
    pub x: Site,
    pub y: Site,
    pub lambda2_g: f64,
    pub log_term: f64,
    pub deviation: f64,
}

/// `|λ² G_h(x,y) - log(2 + max(d(x), d(y)) / (h + |x-y|))|` from the column at `x`.
pub fn b1_deviation(column: &GreenColumn, y: Site) -> PairDeviation {
    let grid = column.grid;
    let x = column.source;
    let g = LAMBDA_SQ * column.at(y);
    let dmax = grid.boundary_distance(x).max(grid.boundary_distance(y)) as f64;
    let log_term = (2.0 + dmax / (1.0 + x.distance(y))).ln();
    PairDeviation {
        x,
        y,
        lambda2_g: g,
        log_term,
        deviation: (g - log_term).abs(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub distance_bin: usize,
    pub boundary_bin: usize,
    pub pairs: usize,
    pub max_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct B1Report {
    pub n: usize,
    pub tolerance: f64,
    pub plan: PairPlan,
    pub alpha_dd: f64,
    pub worst_pair: PairDeviation,
    pub cells: Vec<CellSummary>,
    pub pair_count: usize,
    pub column_count: usize,
    pub columns_sha256: String,
}

/// Empirical `α₀''`: the largest B1 deviation over the stratified pairs.
/// Pairs are grouped by source column and each column is dropped after use.
pub fn check_b1(
    source: &ColumnSource,
    grid: GridSpec,
    plan: &PairPlan,
    tol: f64,
) -> Result<B1Report> {
    if grid.n() < 8 {
        return Err(Error::invalid("check_b1 needs n >= 8"));
    }
    let pairs = plan.pairs(grid);
    if pairs.is_empty() {
        return Err(Error::invalid("pair plan produced no pairs"));
    }
    let mut by_source: BTreeMap<Site, Vec<usize>> = BTreeMap::new();
    for (k, p) in pairs.iter().enumerate() {
        by_source.entry(p.x).or_default().push(k);
    }
    let groups: Vec<(Site, Vec<usize>)> = by_source.into_iter().collect();
    let evaluated = groups
        .par_iter()
        .map(|(x, idx)| {
            let col = source.column(grid, *x, tol)?;
            let devs: Vec<(usize, PairDeviation)> = idx
                .iter()
                .map(|&k| (k, b1_deviation(&col, pairs[k].y)))
                .collect();
            Ok((column_digest(&col), devs))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut devs: Vec<Option<PairDeviation>> = vec![None; pairs.len()];
    let mut digests = Vec::with_capacity(evaluated.len());
    for (digest, list) in evaluated {
        digests.push(digest);
        for (k, d) in list {
            devs[k] = Some(d);
        }
    }
    let devs: Vec<PairDeviation> = devs.into_iter().map(|d| d.expect("evaluated")).collect();

    let mut cells: BTreeMap<(usize, usize), CellSummary> = BTreeMap::new();
    for (p, d) in pairs.iter().zip(&devs) {
        let cell = cells
            .entry((p.distance_bin, p.boundary_bin))
            .or_insert(CellSummary {
                distance_bin: p.distance_bin,
                boundary_bin: p.boundary_bin,
                pairs: 0,
                max_deviation: 0.0,
            });
        cell.pairs += 1;
        cell.max_deviation = cell.max_deviation.max(d.deviation);
    }
    // first pair attaining the maximum, in plan order
    let worst = devs
        .iter()
        .fold(
            &devs[0],
            |w, d| if d.deviation > w.deviation { d } else { w },
        )
        .clone();
    Ok(B1Report {
        n: grid.n(),
        tolerance: tol,
        plan: plan.clone(),
        alpha_dd: worst.deviation,
        worst_pair: worst,
        cells: cells.into_values().collect(),
        pair_count: pairs.len(),
        column_count: digests.len(),
        columns_sha256: combined_digest(&digests),
    })
}

// ---------------------------------------------------------------------------
// B2 and B3

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub n: usize,
    pub h: f64,
    pub value: f64,
}

/// Multi-resolution values with first-order Richardson extrapolation
/// `2 v(h/2) - v(h)` from the two finest levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub levels: Vec<Resolution>,
    pub differences: Vec<f64>,
    pub extrapolated: f64,
    pub residual: f64,
}

impl Extrapolation {
    pub fn new(levels: Vec<Resolution>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::invalid(
                "extrapolation needs at least two resolutions",
            ));
        }
        let differences: Vec<f64> = levels.windows(2).map(|w| w[1].value - w[0].value).collect();
        let (a, b) = (&levels[levels.len() - 2], &levels[levels.len() - 1]);
        let extrapolated = 2.0 * b.value - a.value;
        Ok(Self {
            residual: (extrapolated - b.value).abs(),
            extrapolated,
            differences,
            levels,
        })
    }

    pub fn max_abs_difference(&self) -> f64 {
        self.differences.iter().fold(0.0f64, |m, d| m.max(d.abs()))
    }
}

fn check_resolutions(resolutions: &[usize]) -> Result<()> {
    if resolutions.len() < 2 {
        return Err(Error::invalid("need at least two resolutions"));
    }
    if resolutions.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::invalid(format!(
            "resolutions must be successive doublings, got {resolutions:?}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularPart {
    pub x: [f64; DIM],
    pub u: [i64; DIM],
    pub v: [i64; DIM],
    /// `λ² F(u - v)`.
    pub fullspace_term: f64,
    /// Per level: `λ² G_h(x + hu, x + hv) + log h - λ² F(u - v)`.
    pub values: Extrapolation,
    /// `d(x) ≥ h (log 1/h)^θ` at the coarsest level; reported, not enforced.
    pub theta: f64,
    pub theta_satisfied: bool,
}

impl RegularPart {
    /// The extrapolated `f₁(x)`.
    pub fn f1(&self) -> f64 {
        self.values.extrapolated
    }
}

/// The near-diagonal limit of B2 at the point `x`.
pub fn near_diagonal_limit(
    source: &ColumnSource,
    fullspace: &FullSpaceGreen,
    x: [f64; DIM],
    resolutions: &[usize],
    u: [i64; DIM],
    v: [i64; DIM],
    tol: f64,
) -> Result<RegularPart> {
    check_resolutions(resolutions)?;
    let w: [i64; DIM] = std::array::from_fn(|k| u[k] - v[k]);
    let f_term = LAMBDA_SQ * fullspace.eval(w)?;
    let mut levels = Vec::new();
    for &n in resolutions {
        let grid = GridSpec::new(n)?;
        let xs = grid.site_from_point(x)?;
        let (xu, xv) = (xs.offset(u), xs.offset(v));
        for s in [xu, xv] {
            grid.index_of(s).ok_or(Error::OutsideBox(s.0, n))?;
        }
        let col = source.column(grid, xv, tol)?;
        let h = grid.h();
        levels.push(Resolution {
            n,
            h,
            value: LAMBDA_SQ * col.at(xu) + h.ln() - f_term,
        });
    }
    let coarse = GridSpec::new(resolutions[0])?;
    let h = coarse.h();
    let d = coarse.physical_boundary_distance(coarse.site_from_point(x)?);
    Ok(RegularPart {
        x,
        u,
        v,
        fullspace_term: f_term,
        values: Extrapolation::new(levels)?,
        theta: THETA,
        theta_satisfied: d >= h * (1.0 / h).ln().powf(THETA),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonal {
    pub x: [f64; DIM],
    pub y: [f64; DIM],
    /// Per level `λ² G_h(x, y)`; the extrapolation estimates `f₃(x, y)`.
    pub values: Extrapolation,
}

/// The off-diagonal limit of B3 for points at distance at least `1/l`.
pub fn off_diagonal_limit(
    source: &ColumnSource,
    x: [f64; DIM],
    y: [f64; DIM],
    l: f64,
    resolutions: &[usize],
    tol: f64,
) -> Result<OffDiagonal> {
    check_resolutions(resolutions)?;
    let dist = (0..DIM).map(|k| (x[k] - y[k]).powi(2)).sum::<f64>().sqrt();
    if !(l > 0.0) || dist < 1.0 / l {
        return Err(Error::invalid(format!(
            "|x - y| = {dist} is below the declared separation 1/{l}"
        )));
    }
    let mut levels = Vec::new();
    for &n in resolutions {
        let grid = GridSpec::new(n)?;
        let (xs, ys) = (grid.site_from_point(x)?, grid.site_from_point(y)?);
        let col = source.column(grid, ys, tol)?;
        levels.push(Resolution {
            n,
            h: grid.h(),
            value: LAMBDA_SQ * col.at(xs),
        });
    }
    Ok(OffDiagonal {
        x,
        y,
        values: Extrapolation::new(levels)?,
    })
}

// ---------------------------------------------------------------------------
// Discrete inequalities

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareReport {
    pub n: usize,
    /// Side length `2r` of the cube `Q_r`, here the whole box.
    pub side: f64,
    pub trials: usize,
    /// `max ‖u‖_{L²_h} / (side · ‖D_1 u‖_{L²_h})` over the random trials.
    pub random_constant: f64,
    /// The same ratio for the slowest discrete mode, the sharp constant.
    pub sharp_constant: f64,
}

/// Norms over the box: `‖u‖_{L²_h}` and the face-normal difference norm
/// `(Σ_{x, x+he_1 ∈ Q} h⁴ |D_1 u(x)|²)^{1/2}`.
fn poincare_ratio(u: &Field) -> f64 {
    let grid = u.grid();
    let h = grid.h();
    let h4 = h.powi(4);
    let mut l2 = 0.0;
    let mut d1 = 0.0;
    for (k, site) in grid.sites().enumerate() {
        let val = u.values()[k];
        l2 += h4 * val * val;
        if site.0[0] < grid.n() as i64 {
            let diff = (u.at(site.step(0, 1)) - val) / h;
            d1 += h4 * diff * diff;
        }
    }
    (l2 / d1).sqrt()
}

/// Discrete Poincaré constant on `[0,1]^4` for fields vanishing on the face
/// `x_1 = 0`: random fields and the extremal mode.
pub fn check_poincare(grid: GridSpec, trial_count: usize, seed: u64) -> Result<PoincareReport> {
    if trial_count == 0 {
        return Err(Error::invalid("trial_count must be at least 1"));
    }
    let n = grid.n() as f64;
    let side = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for t in 0..trial_count {
        let field = if t % 2 == 0 {
            let vals: Vec<f64> = grid
                .sites()
                .map(|s| {
                    if s.0[0] == 0 {
                        0.0
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect();
            Field::from_values(grid, vals)?
        } else {
            // smooth random profile along the normal axis times noise across
            let a: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let across: Vec<f64> = (0..grid.side().pow(3))
                .map(|_| rng.gen_range(0.5..1.5))
                .collect();
            let side = grid.side();
            Field::from_fn(grid, |s| {
                let x = s.0[0] as f64 / n;
                let j = ((s.0[1] as usize * side) + s.0[2] as usize) * side + s.0[3] as usize;
                let p = a[0] * x + a[1] * x * x + a[2] * (3.0 * x).sin();
                p * across[j]
            })
        };
        worst = worst.max(poincare_ratio(&field));
    }
    // u_j = sin(π j / (2n + 1)) is the lowest mode with u_0 = 0 and a free end
    let theta = std::f64::consts::PI / (2.0 * n + 1.0);
    let sharp = Field::from_fn(grid, |s| (theta * s.0[0] as f64).sin());
    Ok(PoincareReport {
        n: grid.n(),
        side,
        trials: trial_count,
        random_constant: worst / side,
        sharp_constant: poincare_ratio(&sharp) / side,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevTrial {
    pub label: String,
    pub ratio: f64,
    pub site: Site,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareSobolevReport {
    pub n: usize,
    pub seed: u64,
    pub constant: f64,
    pub worst: SobolevTrial,
    pub trials: Vec<SobolevTrial>,
}

/// `max_x |u(x)| / (√log(2 + d(x)/h) · ‖u‖_{W^{2,2}_h})` for one field.
pub fn sobolev_ratio(u: &Field) -> (f64, Site) {
    let grid = u.grid();
    let w22 = norms(u).w22h;
    let mut best = (0.0f64, grid.center());
    if w22 == 0.0 {
        return best;
    }
    for (k, site) in grid.sites().enumerate() {
        let d = grid.boundary_distance(site) as f64;
        let r = u.values()[k].abs() / ((2.0 + d).ln().sqrt() * w22);
        if r > best.0 {
            best = (r, site);
        }
    }
    best
}

/// Poincaré–Sobolev constant over a fixed suite (spikes, the constant-on-interior field,
/// Green columns) plus `trial_count` random fields.
pub fn check_poincare_sobolev(
    source: &ColumnSource,
    grid: GridSpec,
    trial_count: usize,
    seed: u64,
    tol: f64,
) -> Result<PoincareSobolevReport> {
    if trial_count == 0 {
        return Err(Error::invalid("trial_count must be at least 1"));
    }
    let n = grid.n() as i64;
    let m = n / 2;
    let anchors = [
        ("center", Site([m; DIM])),
        ("quarter", Site([n / 4, m, m, m])),
        ("near-boundary", Site([1, m, m, m])),
    ];
    let mut fields: Vec<(String, Field)> = Vec::new();
    for (name, s) in anchors {
        fields.push((format!("spike/{name}"), Field::spike(grid, s, 1.0)?));
    }
    fields.push((
        "interior-constant".into(),
        Field::from_fn(grid, |s| {
            if s.boundary_distance(grid.n()) > 0 {
                1.0
            } else {
                0.0
            }
        }),
    ));
    let sites: Vec<Site> = anchors.iter().map(|a| a.1).collect();
    let cols = columns(source, grid, &sites, tol)?;
    for (name, s) in anchors {
        fields.push((format!("green/{name}"), cols[&s].values.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = n as f64;
    for t in 0..trial_count {
        let f = if t % 2 == 0 {
            let vals = (0..grid.site_count())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            Field::from_values(grid, vals)?
        } else {
            let k: [f64; DIM] = std::array::from_fn(|_| rng.gen_range(1..=3) as f64);
            let amp: f64 = rng.gen_range(0.5..2.0);
            Field::from_fn(grid, |s| {
                amp * (0..DIM)
                    .map(|i| (std::f64::consts::PI * k[i] * s.0[i] as f64 / nf).sin())
                    .product::<f64>()
            })
        };
        fields.push((format!("random/{t}"), f));
    }
    let trials: Vec<SobolevTrial> = fields
        .par_iter()
        .map(|(label, f)| {
            let (ratio, site) = sobolev_ratio(f);
            SobolevTrial {
                label: label.clone(),
                ratio,
                site,
            }
        })
        .collect();
    let worst = trials
        .iter()
        .fold(&trials[0], |w, t| if t.ratio > w.ratio { t } else { w })
        .clone();
    Ok(PoincareSobolevReport {
        n: grid.n(),
        seed,
        constant: worst.ratio,
        worst,
        trials,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EasyBoundReport {
    pub n: usize,
    /// `max |G_h(x,y)| / √(log(2 + d(x)/h) log(2 + d(y)/h))`.
    pub constant: f64,
    pub x: Site,
    pub y: Site,
}

/// The pointwise bound on `G_h` over every target site of the given columns.
pub fn easy_bound(columns: &[GreenColumn]) -> Result<EasyBoundReport> {
    let first = columns
        .first()
        .ok_or_else(|| Error::invalid("easy_bound needs at least one column"))?;
    let mut best = EasyBoundReport {
        n: first.grid.n(),
        constant: 0.0,
        x: first.source,
        y: first.source,
    };
    for col in columns {
        let grid = col.grid;
        let ly = (2.0 + grid.boundary_distance(col.source) as f64).ln();
        for (k, x) in grid.sites().enumerate() {
            let lx = (2.0 + grid.boundary_distance(x) as f64).ln();
            let c = col.values.values()[k].abs() / (lx * ly).sqrt();
            if c > best.constant {
                best = EasyBoundReport {
                    n: grid.n(),
                    constant: c,
                    x,
                    y: col.source,
                };
            }
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Closeness of regular parts

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalePolicy {
    /// `r < 192 h` is an error.
    Strict,
    /// `r < 192 h` is computed and flagged.
    Relaxed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    pub x: [f64; DIM],
    pub y: [f64; DIM],
    pub n: usize,
    pub r: f64,
    pub k: f64,
    pub scale_satisfied: bool,
    /// Smallest grid with `r ≥ 192 h`.
    pub required_n: usize,
    /// `G_h - η Ĝ_h^{(r)}` at mesh `1/n`.
    pub discrete: f64,
    /// The same at mesh `1/(2n)`.
    pub refined: f64,
    /// `G^{ext} - η Ĝ^{(r)}`, extrapolated from meshes `1/n` and `1/(2n)`.
    pub extrapolated: f64,
    pub value: f64,
}

/// `|G_h - η^{(r)} Ĝ_h^{(r)} - (G^{ext} - η^{(r)} Ĝ^{(r)})|` at `(x, y)`.
///
/// For `x = y` the continuous term is singular and the extrapolated regular
/// part `2 R_{h/2} - R_h` is used instead of `G^{ext} - Ĝ^{(r)}`.
#[allow(clippy::too_many_arguments)]
pub fn check_closeness(
    source: &ColumnSource,
    fullspace: &FullSpaceGreen,
    x: [f64; DIM],
    y: [f64; DIM],
    n: usize,
    r: f64,
    k: f64,
    policy: ScalePolicy,
    tol: f64,
) -> Result<ClosenessReport> {
    if k < 2.0 {
        return Err(Error::invalid("K must be at least 2"));
    }
    let grid = GridSpec::new(n)?;
    let ys = grid.site_from_point(y)?;
    let xs = grid.site_from_point(x)?;
    let dy = grid.physical_boundary_distance(ys);
    if !(r >= dy / k && r <= dy / 2.0) {
        return Err(Error::invalid(format!(
            "r = {r} outside [d(y)/K, d(y)/2] = [{}, {}]",
            dy / k,
            dy / 2.0
        )));
    }
    let required_n = (CLOSENESS_MIN_RATIO / r).ceil() as usize;
    let scale_satisfied = r >= CLOSENESS_MIN_RATIO * grid.h();
    if !scale_satisfied && policy == ScalePolicy::Strict {
        return Err(Error::Precondition(format!(
            "r = {r} < 192 h at n = {n}; needs n >= {required_n}"
        )));
    }
    let dist = (0..DIM).map(|i| (x[i] - y[i]).powi(2)).sum::<f64>().sqrt();
    let eta = cutoff_profile(dist / r);

    let regular = |m: usize| -> Result<(f64, f64)> {
        let g = GridSpec::new(m)?;
        let (gx, gy) = (g.site_from_point(x)?, g.site_from_point(y)?);
        let col = source.column(g, gy, tol)?;
        let green = col.at(gx);
        let shifted = shifted_fullspace(fullspace, x, y, g.h(), r)?;
        Ok((green, green - eta * shifted))
    };
    let (g1, r1) = regular(n)?;
    let (g2, r2) = regular(2 * n)?;
    let extrapolated = if xs == ys {
        2.0 * r2 - r1
    } else {
        (2.0 * g2 - g1) - eta * continuous_fullspace(x, y, r)?
    };
    Ok(ClosenessReport {
        x,
        y,
        n,
        r,
        k,
        scale_satisfied,
        required_n,
        discrete: r1,
        refined: r2,
        extrapolated,
        value: (r1 - extrapolated).abs(),
    })
}

// ---------------------------------------------------------------------------

/// Collected results of one verification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub grids: Vec<usize>,
    pub seed: u64,
    pub tolerance: f64,
    pub b0: Vec<B0Report>,
    pub b1: Vec<B1Report>,
    pub near_diagonal: Vec<RegularPart>,
    pub off_diagonal: Vec<OffDiagonal>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct() -> ColumnSource {
        ColumnSource::direct()
    }

    #[test]
    fn b0_specializations() {
        let grid = GridSpec::new(8).unwrap();
        let c = grid.center();
        let rep = check_b0(&direct(), grid, &[c], 1e-10).unwrap();
        let s = &rep.sites[0];
        assert!(s.shifted <= rep.alpha_0);
        assert!(rep.alpha_0 >= 0.0);
        assert!((s.shifted - (s.lambda2_g + grid.h().ln())).abs() < 1e-14);

        let near = Site([1, 4, 4, 4]);
        let rep = check_b0(&direct(), grid, &[near], 1e-10).unwrap();
        let s = &rep.sites[0];
        assert!(s.lambda2_g <= rep.alpha_0 * 3f64.ln() + 1e-12);
        assert!(check_b0(&direct(), grid, &[], 1e-8).is_err());
    }

    #[test]
    fn b1_pair_formula() {
        let grid = GridSpec::new(16).unwrap();
        let c = grid.center();
        let col = crate::greens::solve_green_column(grid, c, 1e-10).unwrap();
        let d = b1_deviation(&col, c);
        let want = (LAMBDA_SQ * col.at(c) - (2.0 + 0.5 / grid.h()).ln()).abs();
        assert!((d.deviation - want).abs() < 1e-14);

        let b = Site([0, 3, 5, 7]);
        let col = crate::greens::solve_green_column(grid, b, 1e-10).unwrap();
        let d = b1_deviation(&col, Site([16, 3, 5, 7]));
        assert!((d.log_term - 2f64.ln()).abs() < 1e-15);
        assert!(d.deviation.is_finite());
    }

    #[test]
    fn pair_plan_is_deterministic_and_stratified() {
        let plan = PairPlan::standard(1);
        for n in [16usize, 32] {
            let grid = GridSpec::new(n).unwrap();
            let pairs = plan.pairs(grid);
            assert_eq!(pairs, plan.pairs(grid));
            for p in &pairs {
                assert_eq!(plan.distance_bin(grid, p.x.distance(p.y)), p.distance_bin);
                let dmax = grid.boundary_distance(p.x).max(grid.boundary_distance(p.y));
                assert_eq!(plan.boundary_bin(grid, dmax), p.boundary_bin);
            }
            assert!(pairs.len() >= 150, "n = {n}: only {} pairs", pairs.len());
        }
        let other = PairPlan::standard(2).pairs(GridSpec::new(16).unwrap());
        assert_ne!(other, plan.pairs(GridSpec::new(16).unwrap()));
    }

    #[test]
    fn extrapolation_and_resolutions() {
        let levels = vec![
            Resolution {
                n: 8,
                h: 0.125,
                value: 1.0,
            },
            Resolution {
                n: 16,
                h: 0.0625,
                value: 0.9,
            },
            Resolution {
                n: 32,
                h: 0.03125,
                value: 0.85,
            },
        ];
        let e = Extrapolation::new(levels).unwrap();
        assert!((e.extrapolated - 0.8).abs() < 1e-15);
        assert!((e.residual - 0.05).abs() < 1e-15);
        assert!((e.max_abs_difference() - 0.1).abs() < 1e-15);
        assert!(check_resolutions(&[8, 12]).is_err());
        assert!(check_resolutions(&[8]).is_err());
    }

    #[test]
    fn near_diagonal_offsets_are_symmetric() {
        let f = FullSpaceGreen::shared().unwrap();
        let x = [0.5; DIM];
        let e1 = [1, 0, 0, 0];
        let a = near_diagonal_limit(&direct(), f, x, &[4, 8], e1, [0; DIM], 1e-11).unwrap();
        let b = near_diagonal_limit(&direct(), f, x, &[4, 8], [0; DIM], e1, 1e-11).unwrap();
        for (p, q) in a.values.levels.iter().zip(&b.values.levels) {
            assert!((p.value - q.value).abs() < 1e-8);
        }
        assert!(!a.theta_satisfied);
        // a box symmetry maps the center to itself and (1/4,1/2,1/2,1/2) to its mirror
        let p = near_diagonal_limit(
            &direct(),
            f,
            [0.25, 0.5, 0.5, 0.5],
            &[4, 8],
            [0; DIM],
            [0; DIM],
            1e-11,
        )
        .unwrap();
        let q = near_diagonal_limit(
            &direct(),
            f,
            [0.5, 0.5, 0.75, 0.5],
            &[4, 8],
            [0; DIM],
            [0; DIM],
            1e-11,
        )
        .unwrap();
        assert!((p.f1() - q.f1()).abs() < 1e-8);
    }

    #[test]
    fn off_diagonal_symmetry() {
        let x = [0.25, 0.5, 0.5, 0.5];
        let y = [0.5, 0.5, 0.75, 0.25];
        let a = off_diagonal_limit(&direct(), x, y, 4.0, &[4, 8], 1e-11).unwrap();
        let b = off_diagonal_limit(&direct(), y, x, 4.0, &[4, 8], 1e-11).unwrap();
        for (p, q) in a.values.levels.iter().zip(&b.values.levels) {
            assert!((p.value - q.value).abs() < 1e-8 * p.value.abs().max(1.0));
        }
        assert!(off_diagonal_limit(&direct(), x, x, 4.0, &[4, 8], 1e-8).is_err());
    }

    #[test]
    fn poincare_constants() {
        let grid = GridSpec::new(8).unwrap();
        let rep = check_poincare(grid, 6, 3).unwrap();
        let pi = std::f64::consts::PI;
        assert!(rep.random_constant <= 2.0 / pi * 1.5);
        assert!(rep.sharp_constant <= 2.0 / pi * 1.5);
        assert!((rep.sharp_constant - 2.0 / pi).abs() < 0.1);
        // the extremal mode has ratio h / (2 sin(θ/2)) with θ = π/(2n+1)
        let theta = pi / 17.0;
        let want = grid.h() / (2.0 * (theta / 2.0).sin()) / rep.side;
        assert!((rep.sharp_constant - want).abs() < 1e-12);
        assert!(rep.sharp_constant >= rep.random_constant);
    }

    #[test]
    fn poincare_sobolev_examples() {
        let grid = GridSpec::new(8).unwrap();
        let spike = Field::spike(grid, grid.center(), 1.0).unwrap();
        let (ratio, site) = sobolev_ratio(&spike);
        let w = norms(&spike).w22h;
        assert_eq!(site, grid.center());
        assert!((ratio - 1.0 / ((2.0f64 + 4.0).ln().sqrt() * w)).abs() < 1e-14);

        let rep = check_poincare_sobolev(&direct(), grid, 4, 1, 1e-10).unwrap();
        assert!(rep.constant.is_finite() && rep.constant > 0.0);
        let interior = rep
            .trials
            .iter()
            .find(|t| t.label == "interior-constant")
            .unwrap();
        assert!(interior.ratio.is_finite() && interior.ratio > 0.0);
        assert_eq!(rep.trials.len(), 3 + 1 + 3 + 4);
    }

    #[test]
    fn easy_bound_is_small() {
        let grid = GridSpec::new(8).unwrap();
        let cols: Vec<GreenColumn> = [grid.center(), Site([1, 4, 4, 4])]
            .iter()
            .map(|&s| crate::greens::solve_green_column(grid, s, 1e-10).unwrap())
            .collect();
        let rep = easy_bound(&cols).unwrap();
        assert!(rep.constant > 0.0 && rep.constant <= 1.0);
    }

    #[test]
    fn closeness_algebra() {
        let f = FullSpaceGreen::shared().unwrap();
        let x = [0.5; DIM];
        let src = direct();
        // r < 192 h at n = 4: strict refuses, relaxed flags
        let err = check_closeness(&src, f, x, x, 4, 0.25, 2.0, ScalePolicy::Strict, 1e-11);
        assert!(matches!(err, Err(Error::Precondition(_))));
        let a = check_closeness(&src, f, x, x, 4, 0.25, 2.0, ScalePolicy::Relaxed, 1e-11).unwrap();
        assert!(!a.scale_satisfied);
        assert_eq!(a.required_n, 768);
        // x = y: the monitored value is the regular-part residual
        assert!((a.value - 2.0 * (a.discrete - a.refined).abs()).abs() < 1e-14);
        // r doubled inside the window: unchanged since the cutoffs stay 1
        let b = check_closeness(&src, f, x, x, 4, 0.125, 4.0, ScalePolicy::Relaxed, 1e-11).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
        assert!((b.discrete - a.discrete - 2f64.ln() / LAMBDA_SQ).abs() < 1e-12);
        // x ≠ y with |x - y| < r/2
        let y = [0.5, 0.5, 0.5, 0.25];
        let xs = [0.5, 0.5, 0.5, 0.375];
        let c = check_closeness(&src, f, xs, y, 8, 0.125, 2.0, ScalePolicy::Relaxed, 1e-11);
        assert!(c.is_ok());
        assert!(check_closeness(&src, f, x, x, 4, 0.3, 2.0, ScalePolicy::Relaxed, 1e-8).is_err());
    }
}
