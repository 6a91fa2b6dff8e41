#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN
pub mod cli;
pub mod error;
pub mod extremes;
pub mod greens;
pub mod lattice;
pub mod quadrature;
pub mod report;
pub mod sampler;
pub mod scheme;
pub mod splines;
pub mod verify;

pub use error::{Error, Result};
