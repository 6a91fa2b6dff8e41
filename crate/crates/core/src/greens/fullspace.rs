//! The full-space Green's function `F` of `Δ_1^2` on `Z^4`.
//!
//! The Fourier representation
//! `F(x) - F(0) = (2π)^-4 ∫ (cos(x·ξ) - 1) / μ(ξ)^2 dξ`, `μ(ξ) = Σ (2 - 2cos ξ_i)`,
//! is evaluated through `μ^-2 = ∫_0^∞ t e^{-tμ} dt`, which factorizes per axis:
//!
//! `F(x) - F(0) = ∫_0^∞ t [Π_i e^{-2t} I_{x_i}(2t) - (e^{-2t} I_0(2t))^4] dt`.
//!
//! The `t` integral runs over `[T_MIN, T_MAX]` in `s = log t` with composite
//! Gauss–Legendre; the piece beyond `T_MAX` comes from the Hankel expansion
//! of the Bessel functions in closed form. The additive constant `F(0)` is
//! fixed by a weighted least-squares match to the large-`|x|` expansion.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::DIM;
use crate::quadrature::GaussLegendre;

/// `λ = √8 π`.
pub const LAMBDA: f64 = 2.0 * std::f64::consts::SQRT_2 * PI;
/// `λ^2 = 8π^2`.
pub const LAMBDA_SQ: f64 = 8.0 * PI * PI;

/// Beyond this lattice radius the default evaluation uses the expansion.
pub const CROSSOVER_RADIUS: f64 = 24.0;
/// Radii of the shell on which `F(0)` is fitted.
pub const FIT_SHELL: (f64, f64) = (24.0, 48.0);
/// Largest coordinate magnitude the quadrature route accepts.
pub const MAX_COORDINATE: usize = 64;

const T_MIN: f64 = 1e-8;
const T_MAX: f64 = 1e5;
const PANEL_WIDTH: f64 = 0.25;
const MAIN_ORDER: usize = 12;
const CHECK_ORDER: usize = 8;
const TAIL_TERMS: usize = 10;
/// Accepted disagreement between the two quadrature orders.
const QUADRATURE_TOL: f64 = 1e-12;
const CACHE_FILE: &str = "fullspace.json";
const CACHE_VERSION: u32 = 1;

/// `-(8π^2)^-1 log|x| + (24π^2)^-1 Σ x_i^4 / |x|^6`.
pub fn expansion(x: [i64; DIM]) -> f64 {
    let r2: f64 = x.iter().map(|&v| (v * v) as f64).sum();
    let quartic: f64 = x.iter().map(|&v| ((v * v) as f64).powi(2)).sum();
    -0.5 * r2.ln() / LAMBDA_SQ + quartic / (r2 * r2 * r2) / (24.0 * PI * PI)
}

/// Scaled modified Bessel functions `e^{-z} I_k(z)` for `k = 0..=kmax`.
pub fn scaled_bessel_i(z: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if z == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let switch = ((kmax * kmax) as f64).max(2000.0);
    if z > switch {
        for (k, o) in out.iter_mut().enumerate() {
            *o = hankel_scaled(k, z);
        }
    } else {
        miller(z, &mut out);
    }
    out
}

/// Backward recurrence `I_{k-1} = (2k/z) I_k + I_{k+1}`, normalized by
/// `e^{-z}(I_0 + 2 Σ I_k) = 1`.
fn miller(z: f64, out: &mut [f64]) {
    let kmax = out.len() - 1;
    let start = kmax + (80.0 * z).sqrt() as usize + 30;
    let (mut above, mut current) = (0.0f64, 1e-300f64);
    let mut sum = 0.0;
    for k in (1..=start).rev() {
        let below = (2.0 * k as f64 / z) * current + above;
        above = current;
        current = below;
        let m = k - 1;
        if m <= kmax {
            out[m] = current;
        }
        sum += if m == 0 { current } else { 2.0 * current };
        if current.abs() > 1e250 {
            const S: f64 = 1e-250;
            above *= S;
            current *= S;
            sum *= S;
            for o in out.iter_mut() {
                *o *= S;
            }
        }
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Hankel expansion of `e^{-z} I_k(z)` for `z >> k^2`.
fn hankel_scaled(k: usize, z: f64) -> f64 {
    let mu = 4.0 * (k * k) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..400 {
        let odd = (2 * j - 1) as f64;
        term *= -(mu - odd * odd) / (8.0 * j as f64 * z);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * z).sqrt()
}

/// Coefficients `c_j` of `e^{-2t} I_k(2t) ~ (4πt)^{-1/2} Σ_j c_j t^{-j}`.
fn hankel_coefficients(k: usize, terms: usize) -> Vec<f64> {
    let mu = 4.0 * (k * k) as f64;
    let mut c = vec![1.0; terms];
    for j in 1..terms {
        let odd = (2 * j - 1) as f64;
        c[j] = c[j - 1] * -(mu - odd * odd) / (16.0 * j as f64);
    }
    c
}

fn truncated_product(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate().take(a.len() - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Nodes, weights and the Bessel values `e^{-2t} I_k(2t)` at every node.
struct NodeTable {
    weights: Vec<f64>,
    bessel: Vec<f64>,
}

impl NodeTable {
    fn new(order: usize) -> Self {
        let gl = GaussLegendre::new(order);
        let (lo, hi) = (T_MIN.ln(), T_MAX.ln());
        let panels = ((hi - lo) / PANEL_WIDTH).ceil() as usize;
        let width = (hi - lo) / panels as f64;
        let stride = MAX_COORDINATE + 1;
        let mut weights = Vec::with_capacity(panels * order);
        let mut bessel = Vec::with_capacity(panels * order * stride);
        for p in 0..panels {
            let a = lo + p as f64 * width;
            for (s, w) in gl.mapped(a, a + width) {
                let t = s.exp();
                // dt = t ds, and the integrand carries another factor t
                weights.push(w * t * t);
                bessel.extend(scaled_bessel_i(2.0 * t, MAX_COORDINATE));
            }
        }
        Self { weights, bessel }
    }

    fn integrate(&self, x: [usize; DIM]) -> f64 {
        let stride = MAX_COORDINATE + 1;
        let mut total = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            let b = &self.bessel[j * stride..(j + 1) * stride];
            let prod = b[x[0]] * b[x[1]] * b[x[2]] * b[x[3]];
            total += w * (prod - b[0] * b[0] * b[0] * b[0]);
        }
        total
    }
}

/// `F(x) - F(0)` by the heat-kernel quadrature.
pub struct HeatKernelQuadrature {
    main: NodeTable,
    check: NodeTable,
    hankel: Vec<Vec<f64>>,
}

impl HeatKernelQuadrature {
    pub fn new() -> Self {
        Self {
            main: NodeTable::new(MAIN_ORDER),
            check: NodeTable::new(CHECK_ORDER),
            hankel: (0..=MAX_COORDINATE)
                .map(|k| hankel_coefficients(k, TAIL_TERMS))
                .collect(),
        }
    }

    fn coordinates(x: [i64; DIM]) -> Result<[usize; DIM]> {
        let mut out = [0usize; DIM];
        for (o, &v) in out.iter_mut().zip(&x) {
            let a = v.unsigned_abs() as usize;
            if a > MAX_COORDINATE {
                return Err(Error::invalid(format!(
                    "quadrature route supports |x_i| <= {MAX_COORDINATE}, got {x:?}"
                )));
            }
            *o = a;
        }
        // hypercubic symmetry: sort so that equal inputs give identical sums
        out.sort_unstable_by(|a, b| b.cmp(a));
        Ok(out)
    }

    /// `∫_{T_MAX}^∞`, from the product of the per-axis Hankel series.
    fn tail(&self, x: [usize; DIM]) -> f64 {
        let mut p = vec![1.0; 1];
        p.resize(TAIL_TERMS, 0.0);
        let mut q = p.clone();
        for &k in &x {
            p = truncated_product(&p, &self.hankel[k]);
            q = truncated_product(&q, &self.hankel[0]);
        }
        let mut total = 0.0;
        for k in 1..TAIL_TERMS {
            total += (p[k] - q[k]) * T_MAX.powi(-(k as i32)) / k as f64;
        }
        total / (16.0 * PI * PI)
    }

    /// `F(x) - F(0)` without the accuracy check.
    fn difference_unchecked(&self, x: [usize; DIM]) -> f64 {
        self.main.integrate(x) + self.tail(x)
    }

    /// `F(x) - F(0)`, failing if two quadrature orders disagree.
    pub fn difference(&self, x: [i64; DIM]) -> Result<f64> {
        let c = Self::coordinates(x)?;
        let value = self.difference_unchecked(c);
        let estimate = (self.main.integrate(c) - self.check.integrate(c)).abs();
        if estimate > QUADRATURE_TOL {
            return Err(Error::Quadrature { estimate });
        }
        Ok(value)
    }
}

impl Default for HeatKernelQuadrature {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FullSpaceMethod {
    FourierQuadrature,
    Asymptotic,
}

/// The fitted additive constant and the quality of the fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub version: u32,
    /// `F(0)`.
    pub f0: f64,
    /// Coefficients of the `|x|^-4` and `|x|^-6` correction terms.
    pub corrections: Vec<f64>,
    pub shell: (f64, f64),
    /// Weighted RMS of the fit residual over the shell.
    pub fit_rms: f64,
    /// Largest weighted residual after the fit.
    pub fit_max: f64,
    pub points: usize,
}

/// Exponent vectors of the partitions of `total` into at most four parts.
fn partitions(total: usize) -> Vec<[u32; DIM]> {
    let mut out = Vec::new();
    for a in (0..=total).rev() {
        for b in (0..=a.min(total - a)).rev() {
            for c in (0..=b.min(total - a - b)).rev() {
                let d = total - a - b - c;
                if d <= c {
                    out.push([a as u32, b as u32, c as u32, d as u32]);
                }
            }
        }
    }
    out
}

/// `Σ_σ Π_i y_σ(i)^{e_i}` over all 24 permutations (a multiple of `m_λ(y)`).
fn symmetrized_monomial(y: [f64; DIM], e: [u32; DIM]) -> f64 {
    const PERMS: [[usize; 4]; 24] = [
        [0, 1, 2, 3],
        [0, 1, 3, 2],
        [0, 2, 1, 3],
        [0, 2, 3, 1],
        [0, 3, 1, 2],
        [0, 3, 2, 1],
        [1, 0, 2, 3],
        [1, 0, 3, 2],
        [1, 2, 0, 3],
        [1, 2, 3, 0],
        [1, 3, 0, 2],
        [1, 3, 2, 0],
        [2, 0, 1, 3],
        [2, 0, 3, 1],
        [2, 1, 0, 3],
        [2, 1, 3, 0],
        [2, 3, 0, 1],
        [2, 3, 1, 0],
        [3, 0, 1, 2],
        [3, 0, 2, 1],
        [3, 1, 0, 2],
        [3, 1, 2, 0],
        [3, 2, 0, 1],
        [3, 2, 1, 0],
    ];
    PERMS
        .iter()
        .map(|p| (0..DIM).map(|i| y[p[i]].powi(e[i] as i32)).product::<f64>())
        .sum()
}

/// Number of lattice points in the hyperoctahedral orbit of a sorted point.
fn orbit_size(x: [i64; DIM]) -> f64 {
    let mut perms = 24.0;
    let mut i = 0;
    while i < DIM {
        let mut j = i;
        while j < DIM && x[j] == x[i] {
            j += 1;
        }
        perms /= (1..=(j - i)).product::<usize>() as f64;
        i = j;
    }
    let signs = x.iter().filter(|&&v| v != 0).count();
    perms * f64::from(1u32 << signs)
}

/// Points `x_1 ≥ x_2 ≥ x_3 ≥ x_4 ≥ 0` with `lo ≤ |x| ≤ hi`.
fn fundamental_shell(lo: f64, hi: f64) -> Vec<[i64; DIM]> {
    let top = hi.floor() as i64;
    let (lo2, hi2) = (lo * lo, hi * hi);
    let mut out = Vec::new();
    for a in 0..=top {
        for b in 0..=a {
            for c in 0..=b {
                for d in 0..=c {
                    let r2 = (a * a + b * b + c * c + d * d) as f64;
                    if r2 >= lo2 && r2 <= hi2 {
                        out.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    out
}

fn correction_basis(x: [i64; DIM]) -> Vec<f64> {
    let y = x.map(|v| (v * v) as f64);
    let r2: f64 = y.iter().sum();
    let mut row = Vec::new();
    for e in partitions(4) {
        row.push(symmetrized_monomial(y, e) / r2.powi(6));
    }
    for e in partitions(5) {
        row.push(symmetrized_monomial(y, e) / r2.powi(8));
    }
    row
}

fn fit_normalization(quad: &HeatKernelQuadrature) -> Result<Normalization> {
    let points = fundamental_shell(FIT_SHELL.0, FIT_SHELL.1);
    let basis_len = correction_basis([1, 0, 0, 0]).len();
    let cols = 1 + basis_len;
    let mut a = DMatrix::<f64>::zeros(points.len(), cols);
    let mut b = DVector::<f64>::zeros(points.len());
    let mut weights = Vec::with_capacity(points.len());
    for (row, &x) in points.iter().enumerate() {
        let w = orbit_size(x).sqrt();
        weights.push(w);
        let c = HeatKernelQuadrature::coordinates(x)?;
        b[row] = w * (expansion(x) - quad.difference_unchecked(c));
        a[(row, 0)] = w;
        for (k, v) in correction_basis(x).into_iter().enumerate() {
            a[(row, 1 + k)] = w * v;
        }
    }
    // equilibrate columns before the SVD
    let scales: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = a.clone().svd(true, true);
    let sol = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::invalid(format!("normalization fit failed: {e}")))?;
    let residual = &a * &sol - &b;
    let total_weight: f64 = weights.iter().map(|w| w * w).sum();
    let fit_rms = (residual.norm_squared() / total_weight).sqrt();
    let fit_max = residual
        .iter()
        .zip(&weights)
        .map(|(r, w)| (r / w).abs())
        .fold(0.0, f64::max);
    let coef: Vec<f64> = sol.iter().zip(&scales).map(|(c, s)| c / s).collect();
    Ok(Normalization {
        version: CACHE_VERSION,
        f0: coef[0],
        corrections: coef[1..].to_vec(),
        shell: FIT_SHELL,
        fit_rms,
        fit_max,
        points: points.len(),
    })
}

/// `F` with both evaluation routes and the fitted constant.
pub struct FullSpaceGreen {
    quadrature: HeatKernelQuadrature,
    normalization: Normalization,
    crossover: f64,
}

impl FullSpaceGreen {
    /// Builds the quadrature tables and fits `F(0)`.
    pub fn new() -> Result<Self> {
        let quadrature = HeatKernelQuadrature::new();
        let normalization = fit_normalization(&quadrature)?;
        Ok(Self {
            quadrature,
            normalization,
            crossover: CROSSOVER_RADIUS,
        })
    }

    /// As [`FullSpaceGreen::new`], reusing a normalization persisted in
    /// `dir` when it was produced by the same configuration.
    pub fn with_cache(dir: &Path) -> Result<Self> {
        let path = dir.join(CACHE_FILE);
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(norm) = serde_json::from_str::<Normalization>(&text) {
                if norm.version == CACHE_VERSION && norm.shell == FIT_SHELL {
                    return Ok(Self {
                        quadrature: HeatKernelQuadrature::new(),
                        normalization: norm,
                        crossover: CROSSOVER_RADIUS,
                    });
                }
            }
        }
        let green = Self::new()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = dir.join(format!("{CACHE_FILE}.tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_string_pretty(&green.normalization)?)
            .map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(green)
    }

    /// A process-wide instance; the fit runs once.
    pub fn shared() -> Result<&'static FullSpaceGreen> {
        static SHARED: OnceLock<FullSpaceGreen> = OnceLock::new();
        if let Some(g) = SHARED.get() {
            return Ok(g);
        }
        let g = Self::new()?;
        Ok(SHARED.get_or_init(|| g))
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn f0(&self) -> f64 {
        self.normalization.f0
    }

    pub fn crossover(&self) -> f64 {
        self.crossover
    }

    pub fn method_for(&self, x: [i64; DIM]) -> FullSpaceMethod {
        let r: f64 = x.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        if r < self.crossover {
            FullSpaceMethod::FourierQuadrature
        } else {
            FullSpaceMethod::Asymptotic
        }
    }

    /// `F(x) - F(0)` by quadrature.
    pub fn difference(&self, x: [i64; DIM]) -> Result<f64> {
        self.quadrature.difference(x)
    }

    /// `F(x)` by the default route for `|x|`.
    pub fn eval(&self, x: [i64; DIM]) -> Result<f64> {
        self.eval_with(x, self.method_for(x))
    }

    pub fn eval_with(&self, x: [i64; DIM], method: FullSpaceMethod) -> Result<f64> {
        match method {
            FullSpaceMethod::FourierQuadrature => Ok(self.difference(x)? + self.f0()),
            FullSpaceMethod::Asymptotic => {
                if x == [0; DIM] {
                    return Err(Error::invalid("the expansion is singular at x = 0"));
                }
                Ok(expansion(x))
            }
        }
    }
}

/// `Ĝ_h^{(r)}(x, y) = F((x - y)/h) - λ^-2 log h + λ^-2 log r` for `x, y ∈ (hZ)^4`.
pub fn shifted_fullspace(
    green: &FullSpaceGreen,
    x: [f64; DIM],
    y: [f64; DIM],
    h: f64,
    r: f64,
) -> Result<f64> {
    if !(h > 0.0 && r > 0.0) {
        return Err(Error::invalid("h and r must be positive"));
    }
    let mut k = [0i64; DIM];
    for i in 0..DIM {
        let q = (x[i] - y[i]) / h;
        let rounded = q.round();
        if (q - rounded).abs() > 1e-9 * q.abs().max(1.0) {
            return Err(Error::invalid(format!(
                "x - y = {:?} is not on the lattice hZ^4 with h = {h}",
                [x[0] - y[0], x[1] - y[1], x[2] - y[2], x[3] - y[3]]
            )));
        }
        k[i] = rounded as i64;
    }
    Ok(green.eval(k)? + (r.ln() - h.ln()) / LAMBDA_SQ)
}

/// `Ĝ^{(r)}(x, y) = -λ^-2 log|x - y| + λ^-2 log r`.
pub fn continuous_fullspace(x: [f64; DIM], y: [f64; DIM], r: f64) -> Result<f64> {
    let d: f64 = (0..DIM).map(|i| (x[i] - y[i]).powi(2)).sum::<f64>().sqrt();
    if d == 0.0 {
        return Err(Error::invalid(
            "continuous Green's function is singular at x = y",
        ));
    }
    if !(r > 0.0) {
        return Err(Error::invalid("r must be positive"));
    }
    Ok((r.ln() - d.ln()) / LAMBDA_SQ)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_constants() {
        assert_eq!(LAMBDA_SQ - 8.0 * PI * PI, 0.0);
        assert!((LAMBDA * LAMBDA - LAMBDA_SQ).abs() < 1e-13);
    }

    #[test]
    fn bessel_routes_agree_and_normalize() {
        // e^{-1} I_0(1), e^{-1} I_1(1), e^{-10} I_5(10)
        let b = scaled_bessel_i(1.0, 5);
        assert!((b[0] - 0.4657596075936404).abs() < 1e-15);
        assert!((b[1] - 0.20791041534970842).abs() < 1e-15);
        let b = scaled_bessel_i(10.0, 5);
        assert!((b[5] - 0.03528429361493396).abs() < 1e-15);
        for z in [2000.0, 3000.0, 4100.0] {
            let mut m = vec![0.0; 65];
            miller(z, &mut m);
            for k in [0, 7, 40, 64] {
                let h = hankel_scaled(k, z);
                assert!((m[k] - h).abs() < 1e-14 * h, "z={z} k={k}");
            }
        }
        let b = scaled_bessel_i(37.5, 64);
        let sum = b[0] + 2.0 * b[1..].iter().sum::<f64>();
        assert!((sum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn partition_counts() {
        assert_eq!(partitions(4).len(), 5);
        assert_eq!(partitions(5).len(), 6);
        assert_eq!(orbit_size([0, 0, 0, 0]), 1.0);
        assert_eq!(orbit_size([1, 0, 0, 0]), 8.0);
        assert_eq!(orbit_size([3, 2, 1, 1]), 12.0 * 16.0);
    }

    #[test]
    fn continuous_values() {
        let z = [0.0; 4];
        assert_eq!(
            continuous_fullspace([1.0, 0.0, 0.0, 0.0], z, 1.0).unwrap(),
            0.0
        );
        let e = (-1.0f64).exp();
        let v = continuous_fullspace([e, 0.0, 0.0, 0.0], z, 1.0).unwrap();
        assert!((v - 1.0 / LAMBDA_SQ).abs() < 1e-16);
        let v = continuous_fullspace([0.3, 0.4, 0.0, 0.0], z, 1.0).unwrap();
        assert!((v - 0.008_778_811_6).abs() < 1e-10);
        assert!(continuous_fullspace(z, z, 1.0).is_err());
    }

    // F(x) - F(0) from an independent adaptive integration of the Bessel
    // integral (scipy quad with the same analytic tail)
    const FROZEN: [([i64; 4], f64); 9] = [
        ([1, 0, 0, 0], -0.019366673778882532),
        ([2, 0, 0, 0], -0.029933390231060234),
        ([1, 1, 0, 0], -0.025822231705176727),
        ([8, 0, 0, 0], -0.04881323554674206),
        ([16, 0, 0, 0], -0.057643524675562254),
        ([32, 0, 0, 0], -0.0664348190441949),
        ([48, 0, 0, 0], -0.07157239107185866),
        ([64, 0, 0, 0], -0.07521672974193244),
        ([20, 20, 20, 20], -0.06926443703108358),
    ];

    #[test]
    fn quadrature_matches_frozen_values() {
        let q = HeatKernelQuadrature::new();
        for (x, want) in FROZEN {
            let got = q.difference(x).unwrap();
            assert!((got - want).abs() < 1e-12, "{x:?}: {got} vs {want}");
        }
        assert_eq!(q.difference([0; 4]).unwrap(), 0.0);
        assert_eq!(
            q.difference([3, -1, 0, 2]).unwrap(),
            q.difference([0, 2, 1, -3]).unwrap()
        );
        assert!(q.difference([65, 0, 0, 0]).is_err());
    }

    #[test]
    fn bilaplacian_of_f_is_a_delta() {
        let q = HeatKernelQuadrature::new();
        let stencil = crate::lattice::Stencil::bilaplacian();
        for center in [[0i64, 0, 0, 0], [1, 0, 0, 0], [2, 1, 0, 0], [5, 3, 1, 1]] {
            let v = stencil.apply_at(center, |x| q.difference(x).unwrap());
            let want = if center == [0; 4] { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-10, "{center:?}: {v}");
        }
    }

    #[test]
    fn normalization_and_asymptotic_decay() {
        let g = FullSpaceGreen::shared().unwrap();
        let norm = g.normalization();
        assert!((norm.f0 - 0.0225448913).abs() < 1e-9, "{norm:?}");
        let residual = |r: i64| {
            let x = [r, 0, 0, 0];
            g.eval_with(x, FullSpaceMethod::FourierQuadrature).unwrap() - expansion(x)
        };
        let (r8, r16, r32) = (residual(8), residual(16), residual(32));
        eprintln!(
            "f0 {} rms {:e} residuals {r8:e} {r16:e} {r32:e}",
            norm.f0, norm.fit_rms
        );
        assert!(r8 / r16 >= 6.0 && r16 / r32 >= 6.0);
        // both routes agree past the crossover
        for x in [[24, 0, 0, 0], [20, 20, 20, 20], [30, 10, 5, 0]] {
            let a = g.eval_with(x, FullSpaceMethod::FourierQuadrature).unwrap();
            let b = g.eval_with(x, FullSpaceMethod::Asymptotic).unwrap();
            let r = (x.iter().map(|v| v * v).sum::<i64>() as f64).sqrt();
            assert!((a - b).abs() <= 10.0 * r.powi(-4));
        }
    }
}
