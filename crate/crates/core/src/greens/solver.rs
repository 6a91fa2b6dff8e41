//! Clamped box problems `Δ_h^2 u = f` on `V_h`, zero outside.
//!
//! In lattice units the operator restricted to the box is
//! `A = L^2 + D`, where `L` is the 9-point Dirichlet Laplacian on the
//! `(n+1)^4` box sites and `D(x)` counts the box faces through `x`: a
//! neighbour `y` just outside a face only sees `x` itself, so
//! `(Δ_1 u)(y) = u(x)` feeds back into `(Δ_1^2 u)(x)`. Conjugate gradients are
//! preconditioned with `L^2`, which a 4D sine transform diagonalizes.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Field, GridSpec, Site, DIM};

pub const DEFAULT_MAX_ITERATIONS: usize = 500;

/// `A = L^2 + D` on the box sites, in lattice units.
pub struct ClampedOperator {
    side: usize,
    faces: Vec<f64>,
}

impl ClampedOperator {
    pub fn new(grid: GridSpec) -> Self {
        let side = grid.side();
        let faces = grid
            .sites()
            .map(|s| s.face_count(grid.n()) as f64)
            .collect();
        Self { side, faces }
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// `out = L u` with zero values outside the box.
    fn laplacian(&self, u: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(u) {
            *o = -8.0 * v;
        }
        let s = self.side;
        let mut stride = 1;
        for _ in 0..DIM {
            let block = stride * s;
            let pairs = stride * (s - 1);
            for base in (0..u.len()).step_by(block) {
                let (uo, oo) = (&u[base..base + block], &mut out[base..base + block]);
                for j in 0..pairs {
                    oo[j] += uo[j + stride];
                    oo[j + stride] += uo[j];
                }
            }
            stride *= s;
        }
    }

    /// `out = A u`; `scratch` has the same length.
    pub fn apply(&self, u: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        self.laplacian(u, scratch);
        self.laplacian(scratch, out);
        for ((o, f), v) in out.iter_mut().zip(&self.faces).zip(u) {
            *o += f * v;
        }
    }
}

/// Exact inverse of `L^2`: `L` is diagonal in the tensor sine basis.
///
/// The sine transform is applied per axis as a dense `s x s` matrix product.
/// For the side lengths used here (`s <= 65`) this beats an FFT-based DST-I.
pub struct SinePreconditioner {
    side: usize,
    sine: DMatrix<f64>,
    eigen: Vec<f64>,
    scale: f64,
}

impl SinePreconditioner {
    pub fn new(grid: GridSpec) -> Self {
        let side = grid.side();
        let angle = std::f64::consts::PI / (side + 1) as f64;
        let sine = DMatrix::from_fn(side, side, |a, b| {
            (angle * ((a + 1) * (b + 1)) as f64).sin()
        });
        let eigen = (1..=side)
            .map(|k| 2.0 - 2.0 * (angle * k as f64).cos())
            .collect();
        // the sine matrix squares to (s + 1)/2 times the identity
        let scale = (2.0 / (side + 1) as f64).powi(DIM as i32);
        Self {
            side,
            sine,
            eigen,
            scale,
        }
    }

    /// Sine transform along the axis with the given stride, `from` to `to`.
    fn pass(&self, stride: usize, from: &[f64], to: &mut [f64]) {
        let s = self.side;
        if stride == 1 {
            // column-major view: one column per line
            let m = DMatrixView::from_slice(from, s, from.len() / s);
            let mut o = DMatrixViewMut::from_slice(to, s, to.len() / s);
            o.gemm(1.0, &self.sine, &m, 0.0);
            return;
        }
        let block = stride * s;
        for (f, t) in from.chunks_exact(block).zip(to.chunks_exact_mut(block)) {
            let m = DMatrixView::from_slice(f, stride, s);
            let mut o = DMatrixViewMut::from_slice(t, stride, s);
            o.gemm(1.0, &m, &self.sine, 0.0);
        }
    }

    /// Full 4D transform of `a`, ending in `b`; `a` is overwritten.
    fn transform(&self, a: &mut [f64], b: &mut [f64]) {
        let s = self.side;
        self.pass(1, a, b);
        self.pass(s, b, a);
        self.pass(s * s, a, b);
        self.pass(s * s * s, b, a);
        b.copy_from_slice(a);
    }

    /// `z = (L^2)^{-1} r`; `scratch` has the same length.
    pub fn apply(&self, r: &[f64], z: &mut [f64], scratch: &mut [f64]) {
        scratch.copy_from_slice(r);
        self.transform(scratch, z);
        let s = self.side;
        let e = &self.eigen;
        let mut idx = 0;
        for &ea in e {
            for &eb in e {
                for &ec in e {
                    let partial = ea + eb + ec;
                    for &ed in e {
                        let mu = partial + ed;
                        z[idx] *= self.scale / (mu * mu);
                        idx += 1;
                    }
                }
            }
        }
        debug_assert_eq!(idx, s.pow(DIM as u32));
        scratch.copy_from_slice(z);
        self.transform(scratch, z);
    }
}

/// Outcome of a conjugate-gradient run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// `‖b - A u‖ / ‖b‖`, recomputed from the returned iterate.
    pub residual: f64,
    pub tolerance: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG for `A u = b` (lattice units). Returns the best iterate
/// even when the iteration cap is hit.
pub fn solve_lattice(
    grid: GridSpec,
    b: &[f64],
    tol: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    if !(tol > 0.0) {
        return Err(Error::invalid("solver tolerance must be positive"));
    }
    let op = ClampedOperator::new(grid);
    if b.len() != op.len() {
        return Err(Error::invalid(format!(
            "right-hand side has {} entries, grid has {}",
            b.len(),
            op.len()
        )));
    }
    let pre = SinePreconditioner::new(grid);
    let len = b.len();
    let b_norm = dot(b, b).sqrt();
    let mut u = vec![0.0; len];
    if b_norm == 0.0 {
        let stats = SolveStats {
            iterations: 0,
            residual: 0.0,
            tolerance: tol,
            converged: true,
        };
        return Ok((u, stats));
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; len];
    let mut ap = vec![0.0; len];
    let mut scratch = vec![0.0; len];
    pre.apply(&r, &mut z, &mut scratch);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    while iterations < max_iterations {
        op.apply(&p, &mut ap, &mut scratch);
        let alpha = rz / dot(&p, &ap);
        for i in 0..len {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        if dot(&r, &r).sqrt() <= 0.5 * tol * b_norm {
            break;
        }
        pre.apply(&r, &mut z, &mut scratch);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..len {
            p[i] = z[i] + beta * p[i];
        }
    }
    // the recurrence residual drifts; report the true one
    op.apply(&u, &mut ap, &mut scratch);
    let residual = b
        .iter()
        .zip(&ap)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
        / b_norm;
    let stats = SolveStats {
        iterations,
        residual,
        tolerance: tol,
        converged: residual <= tol,
    };
    Ok((u, stats))
}

/// Solves `Δ_h^2 u = f` in `V_h` with `u = 0` outside.
pub fn solve_bilaplacian(f: &Field, tol: f64) -> Result<(Field, SolveStats)> {
    let grid = f.grid();
    let h4 = grid.h().powi(4);
    let b: Vec<f64> = f.values().iter().map(|v| v * h4).collect();
    let (u, stats) = solve_lattice(grid, &b, tol, DEFAULT_MAX_ITERATIONS)?;
    Ok((Field::from_values(grid, u)?, stats))
}

/// `G_h(·, y)` for one source `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct GreenColumn {
    pub grid: GridSpec,
    pub source: Site,
    pub values: Field,
    pub stats: SolveStats,
}

impl GreenColumn {
    pub fn at(&self, x: Site) -> f64 {
        self.values.at(x)
    }

    pub fn converged(&self) -> bool {
        self.stats.converged
    }

    /// Errors with the solver diagnostics unless the column converged.
    pub fn require_converged(self) -> Result<Self> {
        if self.stats.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.stats.iterations,
                residual: self.stats.residual,
            })
        }
    }
}

pub fn solve_green_column(grid: GridSpec, source: Site, tol: f64) -> Result<GreenColumn> {
    solve_green_column_capped(grid, source, tol, DEFAULT_MAX_ITERATIONS)
}

pub fn solve_green_column_capped(
    grid: GridSpec,
    source: Site,
    tol: f64,
    max_iterations: usize,
) -> Result<GreenColumn> {
    let index = grid
        .index_of(source)
        .ok_or(Error::OutsideBox(source.0, grid.n()))?;
    // Δ_h^2 G = δ_{h,y} is A G = e_y once both sides are multiplied by h^4
    let mut b = vec![0.0; grid.site_count()];
    b[index] = 1.0;
    let (u, stats) = solve_lattice(grid, &b, tol, max_iterations)?;
    Ok(GreenColumn {
        grid,
        source,
        values: Field::from_values(grid, u)?,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::apply_bilaplacian;

    #[test]
    fn operator_matches_bilaplacian_of_zero_extension() {
        let grid = GridSpec::new(3).unwrap();
        let f = Field::from_fn(grid, |s| {
            let c = s.coords();
            ((c[0] * 7 + c[1] * 3 - c[2] * 5 + c[3] * 11) % 13) as f64 - 6.0
        });
        let op = ClampedOperator::new(grid);
        let mut out = vec![0.0; op.len()];
        let mut scratch = vec![0.0; op.len()];
        op.apply(f.values(), &mut out, &mut scratch);
        let reference = apply_bilaplacian(&f);
        let h4 = grid.h().powi(4);
        for (a, b) in out.iter().zip(reference.values()) {
            assert!((a - b * h4).abs() < 1e-10);
        }
    }

    #[test]
    fn sine_preconditioner_inverts_laplacian_squared() {
        for n in [4, 24] {
            check_preconditioner(n);
        }
    }

    fn check_preconditioner(n: usize) {
        let grid = GridSpec::new(n).unwrap();
        let op = ClampedOperator::new(grid);
        let pre = SinePreconditioner::new(grid);
        let u: Vec<f64> = (0..op.len())
            .map(|i| ((i * 37) % 11) as f64 - 5.0)
            .collect();
        let mut lu = vec![0.0; u.len()];
        let mut llu = vec![0.0; u.len()];
        op.laplacian(&u, &mut lu);
        op.laplacian(&lu, &mut llu);
        let mut back = vec![0.0; u.len()];
        let mut scratch = vec![0.0; u.len()];
        pre.apply(&llu, &mut back, &mut scratch);
        for (a, b) in back.iter().zip(&u) {
            assert!((a - b).abs() < 1e-9, "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn column_converges_and_is_positive_at_source() {
        let grid = GridSpec::new(8).unwrap();
        let col = solve_green_column(grid, grid.center(), 1e-10).unwrap();
        assert!(col.converged());
        assert!(col.stats.residual <= 1e-10);
        assert!(col.at(grid.center()) > 0.0);
        let edge = solve_green_column(grid, Site::new(0, 4, 4, 4), 1e-10).unwrap();
        assert!(edge.converged());
        assert!(solve_green_column(grid, Site::new(9, 0, 0, 0), 1e-8).is_err());
    }

    #[test]
    fn iteration_cap_returns_flagged_iterate() {
        let grid = GridSpec::new(8).unwrap();
        let col = solve_green_column_capped(grid, grid.center(), 1e-14, 1).unwrap();
        assert!(!col.converged());
        assert_eq!(col.stats.iterations, 1);
        assert!(matches!(
            col.require_converged(),
            Err(Error::NotConverged { iterations: 1, .. })
        ));
    }
}
