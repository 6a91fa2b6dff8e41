//! Dense reference solve for small grids: the Bilaplacian stencil restricted
//! to the box sites, factored by Cholesky.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lattice::{Field, GridSpec, Site, Stencil};

/// Largest grid accepted by the dense route (`7^4 = 2401` unknowns).
pub const DENSE_MAX_N: usize = 6;

/// `A_{xy}` = stencil coefficient of `x - y`, for box sites `x, y`.
pub fn dense_operator(grid: GridSpec) -> Result<DMatrix<f64>> {
    if grid.n() > DENSE_MAX_N {
        return Err(Error::invalid(format!(
            "dense operator limited to n <= {DENSE_MAX_N}, got {}",
            grid.n()
        )));
    }
    let m = grid.site_count();
    let stencil = Stencil::bilaplacian();
    let mut a = DMatrix::zeros(m, m);
    for (i, x) in grid.sites().enumerate() {
        for (offset, c) in stencil.entries() {
            let y = x.offset(*offset);
            if let Some(j) = grid.index_of(y) {
                a[(i, j)] += c;
            }
        }
    }
    Ok(a)
}

/// `A^{-1} e_y` by dense Cholesky.
pub fn dense_green_column(grid: GridSpec, source: Site) -> Result<Field> {
    let j = grid
        .index_of(source)
        .ok_or(Error::OutsideBox(source.0, grid.n()))?;
    let chol = dense_operator(grid)?
        .cholesky()
        .ok_or_else(|| Error::invalid("dense operator is not positive definite"))?;
    let mut e = DVector::zeros(grid.site_count());
    e[j] = 1.0;
    Field::from_values(grid, chol.solve(&e).as_slice().to_vec())
}
