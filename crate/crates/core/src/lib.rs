//! Entropic dynamics at desk scale: maximum-entropy transition kernels,
//! walker ensembles in entropic time, the coupled `(ρ, Φ)` field equations
//! and a Schrödinger reference solver to check them against.

// `!(x > 0.0)` is how NaN gets rejected alongside non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod fields;
pub mod numerics;
pub mod potential;
pub mod rng;
pub mod statmodel;
pub mod wave;

pub use error::{Error, Result};
pub use fields::FieldState;
pub use numerics::{Boundary, DensityField, Grid, ScalarField};
pub use potential::Potential;
pub use statmodel::{DriftPotential, ModelParams};
pub use wave::WaveField;
