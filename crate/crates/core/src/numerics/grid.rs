use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};

/// Minimum number of nodes per axis.
pub const MIN_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Nodes at `x_min + i·L/n`; the point `x_max` is identified with `x_min`.
    Periodic,
    /// Nodes include both end points; derivatives use one-sided stencils there.
    Reflecting,
}

/// One uniform coordinate axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    n_points: usize,
    x_min: f64,
    x_max: f64,
    spacing: f64,
    boundary: Boundary,
}

impl Axis {
    pub fn new(n_points: usize, x_min: f64, x_max: f64, boundary: Boundary) -> Result<Self> {
        if n_points < MIN_POINTS {
            return Err(argument(format!(
                "axis needs at least {MIN_POINTS} points, got {n_points}"
            )));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(argument(format!("axis bounds [{x_min}, {x_max}] are not increasing")));
        }
        let cells = match boundary {
            Boundary::Periodic => n_points,
            Boundary::Reflecting => n_points - 1,
        };
        Ok(Self {
            n_points,
            x_min,
            x_max,
            spacing: (x_max - x_min) / cells as f64,
            boundary,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.coord(i)).collect()
    }

    /// Quadrature weight of node `i`: Riemann for periodic, trapezoid for reflecting.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        match self.boundary {
            Boundary::Periodic => self.spacing,
            Boundary::Reflecting if i == 0 || i + 1 == self.n_points => 0.5 * self.spacing,
            Boundary::Reflecting => self.spacing,
        }
    }

    /// Signed displacement `to − from`, using the minimum image on periodic axes.
    #[inline]
    pub fn displacement(&self, from: f64, to: f64) -> f64 {
        let d = to - from;
        match self.boundary {
            Boundary::Reflecting => d,
            Boundary::Periodic => {
                let l = self.length();
                d - l * (d / l).round()
            }
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self.boundary {
            Boundary::Periodic => x.is_finite(),
            Boundary::Reflecting => x >= self.x_min && x <= self.x_max,
        }
    }

    /// Maps a position back into the domain: wraps on periodic axes, mirrors on
    /// reflecting ones.
    pub fn fold(&self, x: f64) -> f64 {
        match self.boundary {
            Boundary::Periodic => {
                let l = self.length();
                let y = (x - self.x_min).rem_euclid(l);
                self.x_min + y
            }
            Boundary::Reflecting => {
                let l = self.length();
                // reflection is periodic with period 2L
                let y = (x - self.x_min).rem_euclid(2.0 * l);
                if y <= l {
                    self.x_min + y
                } else {
                    self.x_min + 2.0 * l - y
                }
            }
        }
    }

    /// Same node set with the other boundary rule.
    pub fn with_boundary(&self, boundary: Boundary) -> Axis {
        if boundary == self.boundary {
            return self.clone();
        }
        let x_max = match boundary {
            Boundary::Reflecting => self.x_min + (self.n_points - 1) as f64 * self.spacing,
            Boundary::Periodic => self.x_min + self.n_points as f64 * self.spacing,
        };
        Axis {
            n_points: self.n_points,
            x_min: self.x_min,
            x_max,
            spacing: self.spacing,
            boundary,
        }
    }

    /// Linear-interpolation stencil for `x`: `(i0, i1, t)` with value `(1−t)·f[i0] + t·f[i1]`.
    pub fn locate(&self, x: f64) -> Option<(usize, usize, f64)> {
        let s = (x - self.x_min) / self.spacing;
        match self.boundary {
            Boundary::Periodic => {
                let n = self.n_points as f64;
                let s = s.rem_euclid(n);
                let i0 = (s.floor() as usize).min(self.n_points - 1);
                let t = s - i0 as f64;
                Some((i0, (i0 + 1) % self.n_points, t))
            }
            Boundary::Reflecting => {
                if !(0.0..=(self.n_points - 1) as f64).contains(&s) {
                    return None;
                }
                let i0 = (s.floor() as usize).min(self.n_points - 2);
                Some((i0, i0 + 1, s - i0 as f64))
            }
        }
    }
}

/// A uniform tensor-product grid in one or two dimensions.
///
/// Values on a grid are stored row-major: the last axis varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn line(n_points: usize, x_min: f64, x_max: f64, boundary: Boundary) -> Result<Self> {
        Ok(Self {
            axes: vec![Axis::new(n_points, x_min, x_max, boundary)?],
        })
    }

    pub fn from_axes(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(argument(format!(
                "grids have one or two axes, got {}",
                axes.len()
            )));
        }
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Axis::n_points).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Distance in flat storage between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.axes[axis + 1..].iter().map(Axis::n_points).product()
    }

    /// Per-axis node indices of a flat index.
    pub fn unflatten(&self, flat: usize) -> [usize; 2] {
        match self.axes.len() {
            1 => [flat, 0],
            _ => {
                let n1 = self.axes[1].n_points();
                [flat / n1, flat % n1]
            }
        }
    }

    pub fn flatten(&self, idx: [usize; 2]) -> usize {
        match self.axes.len() {
            1 => idx[0],
            _ => idx[0] * self.axes[1].n_points() + idx[1],
        }
    }

    /// Coordinates of the node at `flat`, written into `out` (length `dim`).
    pub fn point_into(&self, flat: usize, out: &mut [f64]) {
        let idx = self.unflatten(flat);
        for (k, axis) in self.axes.iter().enumerate() {
            out[k] = axis.coord(idx[k]);
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point_into(flat, &mut p);
        p
    }

    pub fn weight(&self, flat: usize) -> f64 {
        let idx = self.unflatten(flat);
        self.axes
            .iter()
            .enumerate()
            .map(|(k, a)| a.weight(idx[k]))
            .product()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub fn with_boundary(&self, boundary: Boundary) -> Grid {
        Grid {
            axes: self.axes.iter().map(|a| a.with_boundary(boundary)).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.axes.iter().zip(x).all(|(a, &v)| a.contains(v))
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes
            .iter()
            .map(Axis::spacing)
            .fold(f64::INFINITY, f64::min)
    }

    /// Multilinear interpolation of grid values at `x`. `None` outside a
    /// reflecting axis.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        match self.axes.len() {
            1 => {
                let (i0, i1, t) = self.axes[0].locate(x[0])?;
                Some((1.0 - t) * values[i0] + t * values[i1])
            }
            _ => {
                let (a0, a1, s) = self.axes[0].locate(x[0])?;
                let (b0, b1, t) = self.axes[1].locate(x[1])?;
                let f = |i, j| values[self.flatten([i, j])];
                Some(
                    (1.0 - s) * ((1.0 - t) * f(a0, b0) + t * f(a0, b1))
                        + s * ((1.0 - t) * f(a1, b0) + t * f(a1, b1)),
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_follows_boundary_rule() {
        let p = Axis::new(10, 0.0, 1.0, Boundary::Periodic).unwrap();
        let r = Axis::new(11, 0.0, 1.0, Boundary::Reflecting).unwrap();
        assert_eq!(p.spacing(), 0.1);
        assert_eq!(r.spacing(), 0.1);
    }

    #[test]
    fn rejects_small_or_inverted_axes() {
        assert!(Axis::new(7, 0.0, 1.0, Boundary::Periodic).is_err());
        assert!(Axis::new(16, 1.0, 1.0, Boundary::Periodic).is_err());
        assert!(Axis::new(16, 1.0, 0.0, Boundary::Reflecting).is_err());
        assert!(Grid::from_axes(vec![]).is_err());
    }

    #[test]
    fn boundary_switch_keeps_nodes() {
        let p = Axis::new(512, -20.0, 20.0, Boundary::Periodic).unwrap();
        let r = p.with_boundary(Boundary::Reflecting);
        assert_eq!(r.n_points(), 512);
        for i in [0, 1, 255, 511] {
            assert!((p.coord(i) - r.coord(i)).abs() < 1e-12);
        }
        let back = r.with_boundary(Boundary::Periodic);
        assert!((back.x_max() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn fold_wraps_and_mirrors() {
        let p = Axis::new(16, 0.0, 1.0, Boundary::Periodic).unwrap();
        assert!((p.fold(1.25) - 0.25).abs() < 1e-15);
        assert!((p.fold(-0.25) - 0.75).abs() < 1e-15);
        let r = Axis::new(16, 0.0, 1.0, Boundary::Reflecting).unwrap();
        assert!((r.fold(1.25) - 0.75).abs() < 1e-15);
        assert!((r.fold(-0.25) - 0.25).abs() < 1e-15);
        assert!((r.fold(2.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn minimum_image_displacement() {
        let p = Axis::new(16, 0.0, 1.0, Boundary::Periodic).unwrap();
        assert!((p.displacement(0.9, 0.1) - 0.2).abs() < 1e-15);
        assert!((p.displacement(0.1, 0.9) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_layout() {
        let g = Grid::from_axes(vec![
            Axis::new(8, 0.0, 1.0, Boundary::Reflecting).unwrap(),
            Axis::new(10, 0.0, 2.0, Boundary::Periodic).unwrap(),
        ])
        .unwrap();
        assert_eq!(g.len(), 80);
        assert_eq!(g.stride(0), 10);
        assert_eq!(g.stride(1), 1);
        let flat = g.flatten([3, 7]);
        assert_eq!(g.unflatten(flat), [3, 7]);
        let p = g.point(flat);
        assert!((p[0] - 3.0 / 7.0).abs() < 1e-15);
        assert!((p[1] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn interpolation_is_exact_for_linear_data() {
        let g = Grid::line(9, 0.0, 8.0, Boundary::Reflecting).unwrap();
        let v: Vec<f64> = (0..9).map(|i| 2.0 * i as f64 + 1.0).collect();
        assert!((g.interpolate(&v, &[2.5]).unwrap() - 6.0).abs() < 1e-14);
        assert!(g.interpolate(&v, &[8.5]).is_none());
    }
}
