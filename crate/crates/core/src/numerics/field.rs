use std::sync::Arc;

use crate::error::{argument, domain, Result};
use crate::numerics::grid::Grid;

/// A real function sampled on every node of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(argument(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(domain(format!("non-finite field value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let mut p = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.point_into(i, &mut p);
                f(&p)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![c; n])
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &ScalarField, b: f64) -> Result<Self> {
        self.same_grid(other)?;
        Self::new(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(argument("fields live on different grids"))
        }
    }

    /// Interpolated value at an arbitrary position (multilinear).
    pub fn sample(&self, x: &[f64]) -> Option<f64> {
        if x.len() != self.grid.dim() {
            return None;
        }
        self.grid.interpolate(&self.values, x)
    }
}

/// A nonnegative field with unit integral.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    field: ScalarField,
}

/// Tolerance on the integral of a density.
pub const NORMALIZATION_TOL: f64 = 1e-8;

impl DensityField {
    /// Wraps an already normalised field, checking the density invariants.
    pub fn from_normalized(field: ScalarField) -> Result<Self> {
        if let Some(i) = field.values.iter().position(|&v| v < 0.0) {
            return Err(domain(format!("negative density at node {i}")));
        }
        let total = super::ops::integrate(&field);
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(domain(format!("density integrates to {total}, not 1")));
        }
        Ok(Self { field })
    }

    pub(crate) fn new_unchecked(field: ScalarField) -> Self {
        Self { field }
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn into_field(self) -> ScalarField {
        self.field
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.field.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    /// Mean of coordinate `axis` under this density.
    pub fn mean(&self, axis: usize) -> f64 {
        let g = self.grid();
        let mut p = vec![0.0; g.dim()];
        let mut acc = 0.0;
        for (i, &r) in self.values().iter().enumerate() {
            g.point_into(i, &mut p);
            acc += g.weight(i) * r * p[axis];
        }
        acc
    }

    /// Variance of coordinate `axis` under this density.
    pub fn variance(&self, axis: usize) -> f64 {
        let m = self.mean(axis);
        let g = self.grid();
        let mut p = vec![0.0; g.dim()];
        let mut acc = 0.0;
        for (i, &r) in self.values().iter().enumerate() {
            g.point_into(i, &mut p);
            let d = p[axis] - m;
            acc += g.weight(i) * r * d * d;
        }
        acc
    }

    /// Density with values below `rel · max` raised to that floor (not renormalised).
    pub fn floored_values(&self, rel: f64) -> (Vec<f64>, usize) {
        let floor = rel * self.field.max();
        let mut count = 0;
        let v = self
            .values()
            .iter()
            .map(|&r| {
                if r < floor {
                    count += 1;
                    floor
                } else {
                    r
                }
            })
            .collect();
        (v, count)
    }
}
