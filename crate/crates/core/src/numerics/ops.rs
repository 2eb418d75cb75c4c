//! Second-order finite differences, quadrature and normalisation.
//!
//! Periodic axes use wraparound central differences. Reflecting axes use
//! central differences in the interior and second-order one-sided stencils at
//! the two end nodes, so quadratics are differentiated exactly everywhere.

use crate::error::{argument, domain, Result};
use crate::numerics::field::{DensityField, ScalarField};
use crate::numerics::grid::{Axis, Boundary, Grid};

fn first_derivative_line(axis: &Axis, f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let inv = 0.5 / axis.spacing();
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) * inv;
    }
    match axis.boundary() {
        Boundary::Periodic => {
            out[0] = (f[1] - f[n - 1]) * inv;
            out[n - 1] = (f[0] - f[n - 2]) * inv;
        }
        Boundary::Reflecting => {
            out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) * inv;
            out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) * inv;
        }
    }
}

fn second_derivative_line(axis: &Axis, f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let inv = 1.0 / (axis.spacing() * axis.spacing());
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) * inv;
    }
    match axis.boundary() {
        Boundary::Periodic => {
            out[0] = (f[1] - 2.0 * f[0] + f[n - 1]) * inv;
            out[n - 1] = (f[0] - 2.0 * f[n - 1] + f[n - 2]) * inv;
        }
        Boundary::Reflecting => {
            out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) * inv;
            out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) * inv;
        }
    }
}

/// Applies a 1D line operator along `axis` of a flat value array.
fn along_axis(
    grid: &Grid,
    values: &[f64],
    axis: usize,
    out: &mut [f64],
    op: fn(&Axis, &[f64], &mut [f64]),
) {
    let ax = grid.axis(axis);
    if grid.dim() == 1 {
        op(ax, values, out);
        return;
    }
    let n = ax.n_points();
    let stride = grid.stride(axis);
    let lines = grid.len() / n;
    let mut line = vec![0.0; n];
    let mut res = vec![0.0; n];
    for l in 0..lines {
        // start index of line l: lines enumerate the other axis
        let start = if axis == 0 { l } else { l * n };
        for i in 0..n {
            line[i] = values[start + i * stride];
        }
        op(ax, &line, &mut res);
        for i in 0..n {
            out[start + i * stride] = res[i];
        }
    }
}

/// ∂f/∂x_axis on raw grid values.
pub fn partial_values(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    along_axis(grid, values, axis, &mut out, first_derivative_line);
    out
}

/// ∂²f/∂x_axis² on raw grid values.
pub fn second_partial_values(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    along_axis(grid, values, axis, &mut out, second_derivative_line);
    out
}

fn check_axis(f: &ScalarField, axis: usize) -> Result<()> {
    if axis >= f.grid().dim() {
        return Err(argument(format!(
            "axis {axis} out of range for a {}-d grid",
            f.grid().dim()
        )));
    }
    Ok(())
}

pub fn partial(f: &ScalarField, axis: usize) -> Result<ScalarField> {
    check_axis(f, axis)?;
    ScalarField::new(f.grid().clone(), partial_values(f.grid(), f.values(), axis))
}

pub fn second_partial(f: &ScalarField, axis: usize) -> Result<ScalarField> {
    check_axis(f, axis)?;
    ScalarField::new(
        f.grid().clone(),
        second_partial_values(f.grid(), f.values(), axis),
    )
}

/// Gradient components, one field per axis.
pub fn gradient(f: &ScalarField) -> Result<Vec<ScalarField>> {
    (0..f.grid().dim()).map(|k| partial(f, k)).collect()
}

/// Σ_k ∂²f/∂x_k².
pub fn laplacian(f: &ScalarField) -> Result<ScalarField> {
    weighted_laplacian(f, &vec![1.0; f.grid().dim()])
}

/// Σ_k c_k ∂²f/∂x_k², e.g. with `c_k = 1/m_k` for the mass-weighted form.
pub fn weighted_laplacian(f: &ScalarField, coeffs: &[f64]) -> Result<ScalarField> {
    let g = f.grid();
    if coeffs.len() != g.dim() {
        return Err(argument("one laplacian coefficient per axis required"));
    }
    let mut acc = vec![0.0; f.len()];
    for (k, &c) in coeffs.iter().enumerate() {
        let d2 = second_partial_values(g, f.values(), k);
        for (a, d) in acc.iter_mut().zip(d2) {
            *a += c * d;
        }
    }
    ScalarField::new(g.clone(), acc)
}

/// Quadrature with fixed summation order (node order).
pub fn integrate_values(grid: &Grid, values: &[f64]) -> f64 {
    if grid.dim() == 1 {
        let ax = grid.axis(0);
        let mut s = 0.0;
        for (i, v) in values.iter().enumerate() {
            s += ax.weight(i) * v;
        }
        return s;
    }
    values
        .iter()
        .enumerate()
        .map(|(i, v)| grid.weight(i) * v)
        .fold(0.0, |a, b| a + b)
}

pub fn integrate(f: &ScalarField) -> f64 {
    integrate_values(f.grid(), f.values())
}

/// Rescales a nonnegative field to unit integral.
pub fn normalize(rho: &ScalarField) -> Result<DensityField> {
    if let Some(i) = rho.values().iter().position(|&v| v < 0.0) {
        return Err(domain(format!("cannot normalise: negative value at node {i}")));
    }
    let total = integrate(rho);
    if total <= 0.0 || !total.is_finite() {
        return Err(domain(format!("cannot normalise a field with integral {total}")));
    }
    let scaled = rho.map(|v| v / total)?;
    Ok(DensityField::new_unchecked(scaled))
}
