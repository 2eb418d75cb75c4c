//! External scalar potentials `V(x)`, summed over coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, Result};
use crate::numerics::Grid;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Potential {
    #[default]
    None,
    /// `½ m ω² x²`
    Harmonic { mass: f64, omega: f64 },
    /// `a (x² − b²)²`, minima at `±b`
    DoubleWell { a: f64, b: f64 },
    /// Smooth barrier `height · exp(−x² / 2 width²)`
    Barrier { height: f64, width: f64 },
    /// `Σ_k c_k x^k`
    Polynomial { coefficients: Vec<f64> },
}

impl Potential {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::None => true,
            Self::Harmonic { mass, omega } => *mass > 0.0 && omega.is_finite() && mass.is_finite(),
            Self::DoubleWell { a, b } => a.is_finite() && b.is_finite(),
            Self::Barrier { height, width } => height.is_finite() && *width > 0.0 && width.is_finite(),
            Self::Polynomial { coefficients } => coefficients.iter().all(|c| c.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(argument(format!("invalid potential parameters {self:?}")))
        }
    }

    fn along(&self, x: f64) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Harmonic { mass, omega } => 0.5 * mass * omega * omega * x * x,
            Self::DoubleWell { a, b } => {
                let d = x * x - b * b;
                a * d * d
            }
            Self::Barrier { height, width } => height * (-0.5 * x * x / (width * width)).exp(),
            Self::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.along(v)).sum()
    }

    /// `V` on every node; fails if any value is not finite.
    pub fn on_grid(&self, grid: &Grid) -> Result<Vec<f64>> {
        self.validate()?;
        let mut p = vec![0.0; grid.dim()];
        let mut out = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            grid.point_into(i, &mut p);
            let v = self.value(&p);
            if !v.is_finite() {
                return Err(domain(format!("potential is not finite at {p:?}")));
            }
            out.push(v);
        }
        Ok(out)
    }
}
