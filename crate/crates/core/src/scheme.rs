//! The mollified finite-difference scheme `Δ_h^2 u_h = T^{h,3,3,3,3} Δ^2 u`
//! and empirical convergence rates against manufactured solutions.
//!
//! The right-hand side is never formed from the distribution `Δ^2 ũ`.
//! Instead it is assembled as `Σ_i D_i D_{-i} T^{h,3,3,3,3-2e_i} Δũ`. All
//! manufactured solutions are tensor products `u = Π_i p(x_i)`, so `Δũ` is a
//! sum of separable terms and every smoothing is a product of 1D
//! convolutions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::solver::{solve_bilaplacian, SolveStats};
use crate::lattice::{norms, Field, GridSpec, DIM};
use crate::quadrature::GaussLegendre;
use crate::report::{num, Csv};
use crate::splines::{smooth_axis, SplineKernel};

const AXIS_RULE_ORDER: usize = 16;

/// The 1D factor `p` of `u = α Π p(x_i)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    /// `sin^2(πt)`.
    SinSquared,
    /// `(t(1 - t))^a`, `a > 1`.
    Power {
        a: f64,
    },
}

impl Profile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::SinSquared => (std::f64::consts::PI * t).sin().powi(2),
            Profile::Power { a } => (t * (1.0 - t)).max(0.0).powf(a),
        }
    }

    pub fn first(&self, t: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::SinSquared => std::f64::consts::PI * (2.0 * std::f64::consts::PI * t).sin(),
            Profile::Power { a } => {
                let q = (t * (1.0 - t)).max(0.0);
                a * q.powf(a - 1.0) * (1.0 - 2.0 * t)
            }
        }
    }

    pub fn second(&self, t: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::SinSquared => {
                let pi = std::f64::consts::PI;
                2.0 * pi * pi * (2.0 * pi * t).cos()
            }
            Profile::Power { a } => {
                let q = (t * (1.0 - t)).max(0.0);
                let d = 1.0 - 2.0 * t;
                a * (a - 1.0) * q.powf(a - 2.0) * d * d - 2.0 * a * q.powf(a - 1.0)
            }
        }
    }
}

/// `u(x) = α Π_i p(x_i)` on `[0,1]^4`, extended by zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedSolution {
    pub id: String,
    pub profile: Profile,
    pub amplitude: f64,
}

impl ManufacturedSolution {
    pub fn zero() -> Self {
        Self {
            id: "zero".into(),
            profile: Profile::Zero,
            amplitude: 0.0,
        }
    }

    pub fn sin_squared() -> Self {
        Self {
            id: "sin2".into(),
            profile: Profile::SinSquared,
            amplitude: 1.0,
        }
    }

    /// `Π (x_i(1 - x_i))^a`; clamped for `a > 1`.
    pub fn power(a: f64) -> Result<Self> {
        if !(a > 1.0) {
            return Err(Error::invalid(format!(
                "power profile needs a > 1 to be clamped, got {a}"
            )));
        }
        Ok(Self {
            id: format!("power{a}"),
            profile: Profile::Power { a },
            amplitude: 1.0,
        })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            id: format!("{}x{alpha}", self.id),
            profile: self.profile,
            amplitude: self.amplitude * alpha,
        }
    }

    /// Supremum of the `s` with `ũ ∈ W^{s,2}(R^4)`.
    ///
    /// `sin^2` vanishes to second order at the faces and its zero extension
    /// has a jump in the second derivative, giving `5/2`. `(t(1-t))^a`
    /// behaves like `t^a` at the faces, giving `a + 1/2`.
    pub fn s_max(&self) -> f64 {
        match self.profile {
            Profile::Zero => f64::INFINITY,
            Profile::SinSquared => 2.5,
            Profile::Power { a } => a + 0.5,
        }
    }

    fn inside(x: [f64; DIM]) -> bool {
        x.iter().all(|&t| (0.0..=1.0).contains(&t))
    }

    pub fn u(&self, x: [f64; DIM]) -> f64 {
        if !Self::inside(x) {
            return 0.0;
        }
        self.amplitude * x.iter().map(|&t| self.profile.value(t)).product::<f64>()
    }

    pub fn gradient(&self, x: [f64; DIM]) -> [f64; DIM] {
        if !Self::inside(x) {
            return [0.0; DIM];
        }
        std::array::from_fn(|k| {
            self.amplitude
                * (0..DIM)
                    .map(|j| {
                        if j == k {
                            self.profile.first(x[j])
                        } else {
                            self.profile.value(x[j])
                        }
                    })
                    .product::<f64>()
        })
    }

    /// `Δu` inside the box, 0 outside.
    pub fn laplacian(&self, x: [f64; DIM]) -> f64 {
        if !Self::inside(x) {
            return 0.0;
        }
        let p: Vec<f64> = x.iter().map(|&t| self.profile.value(t)).collect();
        let q: Vec<f64> = x.iter().map(|&t| self.profile.second(t)).collect();
        let mut total = 0.0;
        for (k, &qk) in q.iter().enumerate() {
            let mut term = qk;
            for j in (0..DIM).filter(|&j| j != k) {
                term *= p[j];
            }
            total += term;
        }
        self.amplitude * total
    }

    /// Largest `|u|` and `|∇u|` over a grid of boundary points.
    pub fn boundary_defect(&self, per_axis: usize) -> f64 {
        let mut worst = 0.0f64;
        let m = per_axis.max(2);
        for axis in 0..DIM {
            for face in [0.0, 1.0] {
                for idx in 0..m.pow(3) {
                    let mut rest = idx;
                    let mut x = [0.0; DIM];
                    for (j, xj) in x.iter_mut().enumerate() {
                        if j == axis {
                            *xj = face;
                        } else {
                            *xj = (rest % m) as f64 / (m - 1) as f64;
                            rest /= m;
                        }
                    }
                    worst = worst.max(self.u(x).abs());
                    for g in self.gradient(x) {
                        worst = worst.max(g.abs());
                    }
                }
            }
        }
        worst
    }

    /// `u` sampled at the sites of `grid`.
    pub fn sample(&self, grid: GridSpec) -> Field {
        Field::from_fn(grid, |s| self.u(grid.point(s)))
    }
}

/// `T^{h,3,3,3,3} Δ^2 ũ` at every box site, assembled in commuted form.
pub fn assemble_rhs(grid: GridSpec, sol: &ManufacturedSolution) -> Field {
    let n = grid.n() as i64;
    let h = grid.h();
    let rule = GaussLegendre::new(AXIS_RULE_ORDER);
    let p = sol.profile;
    // 1D tables over lattice coordinates -1..=n+1
    let table = |kernel: SplineKernel, second: bool| -> Vec<f64> {
        (-1..=n + 1)
            .map(|k| {
                let g = |t: f64| if second { p.second(t) } else { p.value(t) };
                smooth_axis(&rule, kernel, h, k as f64 * h, &g, (0.0, 1.0))
            })
            .collect()
    };
    let box_p = table(SplineKernel::Box, false);
    let box_q = table(SplineKernel::Box, true);
    let quad_p = table(SplineKernel::Quadratic, false);
    let quad_q = table(SplineKernel::Quadratic, true);

    // Φ_i(a) = α Σ_k Π_j S_{ijk}(a_j) with θ_1 on axis i and p'' on axis k
    let factor = |i: usize, j: usize, k: usize, c: i64| -> f64 {
        let idx = (c + 1) as usize;
        match (i == j, j == k) {
            (true, true) => box_q[idx],
            (true, false) => box_p[idx],
            (false, true) => quad_q[idx],
            (false, false) => quad_p[idx],
        }
    };
    let phi = |i: usize, a: [i64; DIM]| -> f64 {
        (0..DIM)
            .map(|k| (0..DIM).map(|j| factor(i, j, k, a[j])).product::<f64>())
            .sum::<f64>()
    };
    let scale = sol.amplitude / (h * h);
    Field::from_fn(grid, |s| {
        let a = s.coords();
        let mut total = 0.0;
        for i in 0..DIM {
            let mut plus = a;
            plus[i] += 1;
            let mut minus = a;
            minus[i] -= 1;
            total += phi(i, plus) - 2.0 * phi(i, a) + phi(i, minus);
        }
        total * scale
    })
}

/// `u_h` solving `Δ_h^2 u_h = T^{h,3,3,3,3} Δ^2 ũ` in `V_h`.
pub fn solve_scheme(
    grid: GridSpec,
    sol: &ManufacturedSolution,
    tol: f64,
) -> Result<(Field, SolveStats)> {
    let rhs = assemble_rhs(grid, sol);
    let (u, stats) = solve_bilaplacian(&rhs, tol)?;
    if !stats.converged {
        return Err(Error::NotConverged {
            iterations: stats.iterations,
            residual: stats.residual,
        });
    }
    Ok((u, stats))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeLevel {
    pub n: usize,
    pub h: f64,
    pub w22_error: f64,
    pub linf_error: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub solution: String,
    pub s_max: Option<f64>,
    pub tolerance: f64,
    pub levels: Vec<SchemeLevel>,
    /// Least-squares slope of `log error` against `log h`; `None` when
    /// undefined (fewer than two nonzero errors).
    pub rate: Option<f64>,
}

impl SchemeReport {
    pub fn to_csv(&self) -> Csv {
        let mut csv = Csv::new(["n", "h", "w22_error", "linf_error", "iterations"]);
        for l in &self.levels {
            csv.push([
                l.n.to_string(),
                num(l.h),
                num(l.w22_error),
                num(l.linf_error),
                l.iterations.to_string(),
            ]);
        }
        csv
    }
}

/// `(‖u_h - ũ‖_{W^{2,2}_h((hZ)^4)}, ‖u_h - ũ‖_{L^∞_h})`, with `ũ` sampled.
pub fn scheme_error(u_h: &Field, sol: &ManufacturedSolution) -> Result<(f64, f64)> {
    let exact = sol.sample(u_h.grid());
    let e = u_h.axpy(-1.0, &exact)?;
    let nm = norms(&e);
    Ok((nm.w22h, nm.linfh))
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn measure_rate(
    sol: &ManufacturedSolution,
    meshes: &[usize],
    tol: f64,
) -> Result<SchemeReport> {
    if meshes.len() < 3 {
        return Err(Error::invalid("a rate fit needs at least three meshes"));
    }
    let levels = meshes
        .par_iter()
        .map(|&n| {
            let grid = GridSpec::new(n)?;
            let (u, stats) = solve_scheme(grid, sol, tol)?;
            let (w22_error, linf_error) = scheme_error(&u, sol)?;
            Ok(SchemeLevel {
                n,
                h: grid.h(),
                w22_error,
                linf_error,
                iterations: stats.iterations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rate = fit_loglog(
        &levels
            .iter()
            .map(|l| (l.h, l.w22_error))
            .collect::<Vec<_>>(),
    );
    let s_max = sol.s_max();
    Ok(SchemeReport {
        solution: sol.id.clone(),
        s_max: s_max.is_finite().then_some(s_max),
        tolerance: tol,
        levels,
        rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::apply_bilaplacian;
    use crate::splines::{smooth, FunctionHandle, SmoothingPlan};

    #[test]
    fn manufactured_solutions_are_clamped() {
        for sol in [
            ManufacturedSolution::sin_squared(),
            ManufacturedSolution::power(1.6).unwrap(),
            ManufacturedSolution::power(3.0).unwrap(),
        ] {
            assert!(sol.boundary_defect(7) <= 1e-12, "{}", sol.id);
        }
        assert!(ManufacturedSolution::power(1.0).is_err());
    }

    #[test]
    fn profile_derivatives_match_differences() {
        let e = 1e-5;
        for p in [Profile::SinSquared, Profile::Power { a: 2.5 }] {
            for t in [0.2, 0.45, 0.8] {
                let d1 = (p.value(t + e) - p.value(t - e)) / (2.0 * e);
                let d2 = (p.value(t + e) - 2.0 * p.value(t) + p.value(t - e)) / (e * e);
                assert!((d1 - p.first(t)).abs() < 1e-7);
                assert!((d2 - p.second(t)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn zero_solution_gives_zero() {
        let grid = GridSpec::new(4).unwrap();
        let sol = ManufacturedSolution::zero();
        let (u, _) = solve_scheme(grid, &sol, 1e-10).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
        let report = measure_rate(&sol, &[2, 3, 4], 1e-10).unwrap();
        assert!(report.levels.iter().all(|l| l.w22_error == 0.0));
        assert_eq!(report.rate, None);
    }

    #[test]
    fn scheme_is_linear() {
        let grid = GridSpec::new(6).unwrap();
        let sol = ManufacturedSolution::sin_squared();
        let (u1, _) = solve_scheme(grid, &sol, 1e-12).unwrap();
        let (u3, _) = solve_scheme(grid, &sol.scaled(-3.0), 1e-12).unwrap();
        let scale = u1.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in u1.values().iter().zip(u3.values()) {
            assert!((-3.0 * a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn rhs_matches_direct_smoothing_in_the_interior() {
        // at sites whose stencil stays away from the faces, Δ^2 u is smooth
        // and T^{h,3,3,3,3} Δ^2 u can be smoothed directly
        let grid = GridSpec::new(16).unwrap();
        let sol = ManufacturedSolution::sin_squared();
        let rhs = assemble_rhs(grid, &sol);
        let pi = std::f64::consts::PI;
        let p = |t: f64| (pi * t).sin().powi(2);
        let p2 = |t: f64| 2.0 * pi * pi * (2.0 * pi * t).cos();
        let p4 = |t: f64| -8.0 * pi.powi(4) * (2.0 * pi * t).cos();
        let bilap = FunctionHandle::everywhere(move |y: [f64; 4]| {
            let mut total = 0.0;
            for k in 0..4 {
                let mut a = p4(y[k]);
                let mut b = 0.0;
                for j in (0..4).filter(|&j| j != k) {
                    a *= p(y[j]);
                    let mut c = p2(y[k]) * p2(y[j]);
                    for l in (0..4).filter(|&l| l != k && l != j) {
                        c *= p(y[l]);
                    }
                    b += c;
                }
                total += a + b;
            }
            total
        });
        let plan = SmoothingPlan::all_quadratic(grid.h()).unwrap();
        for s in [grid.center(), crate::lattice::Site::new(5, 9, 4, 11)] {
            let direct = smooth(&bilap, &plan, grid.point(s)).unwrap();
            assert!((rhs.at(s) - direct).abs() < 1e-9 * direct.abs().max(1.0));
        }
        // and the discrete Bilaplacian of the sampled u is close to it
        let du = apply_bilaplacian(&sol.sample(grid));
        let c = grid.center();
        assert!((du.at(c) - rhs.at(c)).abs() < 0.05 * rhs.at(c).abs());
    }

    #[test]
    fn loglog_fit() {
        let pts: Vec<(f64, f64)> = [0.5f64, 0.25, 0.125]
            .iter()
            .map(|&h| (h, 3.0 * h.powf(1.5)))
            .collect();
        assert!((fit_loglog(&pts).unwrap() - 1.5).abs() < 1e-12);
    }
}
