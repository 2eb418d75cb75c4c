//! Grids, discrete differential operators and quadrature shared by all engines.

pub mod field;
pub mod grid;
pub mod ops;

pub use field::{DensityField, ScalarField, NORMALIZATION_TOL};
pub use grid::{Axis, Boundary, Grid};
pub use ops::{
    gradient, integrate, laplacian, normalize, partial, second_partial, weighted_laplacian,
};
