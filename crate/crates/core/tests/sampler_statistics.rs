use membrane_core::greens::solve_green_column;
use membrane_core::lattice::{GridSpec, Site};
use membrane_core::sampler::{sample_field_stream, DEFAULT_SAMPLE_TOL};

const DRAWS: u64 = 2000;

#[test]
fn empirical_covariance_matches_the_green_function() {
    let grid = GridSpec::new(8).unwrap();
    let c = grid.center();
    let sites = [
        c,
        c.step(0, 1),
        Site::new(2, 3, 4, 4),
        Site::new(6, 5, 4, 4), // reflection of the previous site through c
    ];
    let mut draws: Vec<[f64; 4]> = Vec::with_capacity(DRAWS as usize);
    for i in 0..DRAWS {
        let (f, _) = sample_field_stream(grid, 2024, i, DEFAULT_SAMPLE_TOL).unwrap();
        draws.push(sites.map(|s| f.at(s)));
    }
    let m = DRAWS as f64;
    let mean: [f64; 4] = std::array::from_fn(|k| draws.iter().map(|d| d[k]).sum::<f64>() / m);
    let cov = |a: usize, b: usize| {
        draws
            .iter()
            .map(|d| (d[a] - mean[a]) * (d[b] - mean[b]))
            .sum::<f64>()
            / (m - 1.0)
    };

    let gc = solve_green_column(grid, c, 1e-12).unwrap();
    let g_cc = gc.at(c);
    let g_cn = gc.at(sites[1]);
    for (k, mk) in mean.iter().enumerate() {
        let sd = cov(k, k).sqrt();
        assert!(mk.abs() < 4.0 * sd / m.sqrt(), "mean[{k}] = {mk}");
    }
    let var = cov(0, 0);
    assert!((var / g_cc - 1.0).abs() < 0.10, "{var} vs {g_cc}");
    let cn = cov(0, 1);
    assert!((cn / g_cn - 1.0).abs() < 0.15, "{cn} vs {g_cn}");

    // mirror sites have the same variance
    let g2 = solve_green_column(grid, sites[2], 1e-12)
        .unwrap()
        .at(sites[2]);
    let g3 = solve_green_column(grid, sites[3], 1e-12)
        .unwrap()
        .at(sites[3]);
    assert!((g2 - g3).abs() < 1e-10 * g2);
    assert!((cov(2, 2) / cov(3, 3) - 1.0).abs() < 0.15);
    assert!((cov(2, 2) / g2 - 1.0).abs() < 0.10);
}
