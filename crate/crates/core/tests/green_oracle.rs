use membrane_core::greens::{dense_green_column, dense_operator, solve_green_column};
use membrane_core::lattice::{Field, GridSpec, Site};

fn max_rel(a: &Field, b: &Field) -> f64 {
    let scale = b.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

#[test]
fn pcg_matches_dense_factorization() {
    let grid = GridSpec::new(6).unwrap();
    for src in [
        Site::new(3, 3, 3, 3),
        Site::new(0, 0, 0, 0),
        Site::new(1, 5, 2, 6),
    ] {
        let dense = dense_green_column(grid, src).unwrap();
        let col = solve_green_column(grid, src, 1e-12).unwrap();
        assert!(col.converged());
        let err = max_rel(&col.values, &dense);
        assert!(err <= 1e-8, "{src:?}: {err:e}");
    }
}

#[test]
fn columns_are_symmetric_and_reflection_invariant() {
    let grid = GridSpec::new(6).unwrap();
    let (x, y) = (Site::new(1, 2, 3, 4), Site::new(4, 4, 2, 1));
    let gx = solve_green_column(grid, x, 1e-12).unwrap();
    let gy = solve_green_column(grid, y, 1e-12).unwrap();
    assert!((gx.at(y) - gy.at(x)).abs() <= 1e-10 * gx.at(y).abs());

    // x -> n - x along the first axis, and a coordinate swap
    let rx = Site::new(5, 2, 3, 4);
    let ry = Site::new(2, 4, 2, 1);
    let grx = solve_green_column(grid, rx, 1e-12).unwrap();
    assert!((grx.at(ry) - gx.at(y)).abs() <= 1e-10 * gx.at(y).abs());
    let sx = Site::new(2, 1, 3, 4);
    let gsx = solve_green_column(grid, sx, 1e-12).unwrap();
    assert!((gsx.at(y) - gx.at(y)).abs() <= 1e-10 * gx.at(y).abs());
}

#[test]
fn dense_operator_is_positive_definite() {
    let grid = GridSpec::new(3).unwrap();
    let a = dense_operator(grid).unwrap();
    assert_eq!(a.nrows(), 256);
    assert_eq!(a, a.transpose());
    let eig = a.clone().symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min > 0.0, "{min}");
}
