//! Green's functions of the discrete Bilaplacian: the full-space function
//! `F` on `Z^4` and the clamped box Green's function `G_h`.

pub mod cache;
pub mod dense;
pub mod fullspace;
pub mod solver;

pub use cache::{column_digest, ColumnCache, ColumnSource};
pub use dense::{dense_green_column, dense_operator, DENSE_MAX_N};
pub use fullspace::{
    continuous_fullspace, expansion, shifted_fullspace, FullSpaceGreen, FullSpaceMethod,
    Normalization, LAMBDA, LAMBDA_SQ,
};
pub use solver::{
    solve_bilaplacian, solve_green_column, ClampedOperator, GreenColumn, SinePreconditioner,
    SolveStats,
};
