//! Comparison report and the density distance table it is built from.

use std::collections::BTreeMap;

use edyn_core::numerics::ops::integrate_values;
use edyn_core::{DensityField, Error};
use serde::Serialize;

use crate::config::Engine;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Distance {
    pub l1: f64,
    pub linf: f64,
}

/// `L1 = ∫|a − b|` and `L∞ = max |a − b|` sample by sample.
pub fn compare_densities(a: &[DensityField], b: &[DensityField]) -> Result<Vec<Distance>, Error> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "series have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    a.iter()
        .zip(b)
        .map(|(a, b)| {
            if **a.grid() != **b.grid() {
                return Err(Error::Argument("series live on different grids".into()));
            }
            let diff: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).collect();
            Ok(Distance {
                l1: integrate_values(a.grid(), &diff),
                linf: diff.iter().copied().fold(0.0, f64::max),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairDistance {
    pub a: Engine,
    pub b: Engine,
    pub l1: f64,
    pub linf: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub distances: Vec<PairDistance>,
    pub mean: BTreeMap<Engine, f64>,
    pub variance: BTreeMap<Engine, f64>,
    /// `L∞(ρ(t), ρ(0))` per deterministic engine.
    pub change_from_initial: BTreeMap<Engine, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wave_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrow_asymmetry: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical_position: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: Relation::AtMost,
            limit,
            // NaN never passes
            passed: value <= limit,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: Relation::AtLeast,
            limit,
            passed: value >= limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub seed: u64,
    pub engines: Vec<Engine>,
    pub dt_solver: f64,
    pub samples: Vec<Sample>,
    pub energy_drift: BTreeMap<Engine, f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialise");
        s.push('\n');
        s
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use edyn_core::numerics::normalize;
    use edyn_core::{Boundary, Grid, ScalarField};

    use super::*;

    fn gaussian(g: &Arc<Grid>, mu: f64) -> DensityField {
        normalize(&ScalarField::from_fn(g.clone(), |x| (-0.5 * (x[0] - mu).powi(2)).exp()).unwrap()).unwrap()
    }

    #[test]
    fn identical_series_are_at_distance_zero() {
        let g = Arc::new(Grid::line(256, -10.0, 10.0, Boundary::Reflecting).unwrap());
        let a = vec![gaussian(&g, 0.0), gaussian(&g, 1.0)];
        for d in compare_densities(&a, &a).unwrap() {
            assert_eq!(d.l1, 0.0);
            assert_eq!(d.linf, 0.0);
        }
        assert!(compare_densities(&a, &a[..1]).is_err());
    }

    #[test]
    fn one_cell_shift_is_visible() {
        let g = Arc::new(Grid::line(512, -2.0, 2.0, Boundary::Reflecting).unwrap());
        let h = g.axis(0).spacing();
        let narrow = |mu: f64| {
            normalize(&ScalarField::from_fn(g.clone(), |x| (-0.5 * ((x[0] - mu) / 0.05).powi(2)).exp()).unwrap()).unwrap()
        };
        let d = compare_densities(&[narrow(0.0)], &[narrow(h)]).unwrap();
        assert!(d[0].l1 > 0.0);
    }

    #[test]
    fn shifted_unit_gaussians() {
        // 2(Φ(0.05) − Φ(−0.05)) = 0.0797...
        let g = Arc::new(Grid::line(2001, -12.0, 12.0, Boundary::Reflecting).unwrap());
        let d = compare_densities(&[gaussian(&g, 0.0)], &[gaussian(&g, 0.1)]).unwrap();
        assert!((d[0].l1 - 0.079_755_2).abs() < 1e-3, "{}", d[0].l1);
    }

    proptest::proptest! {
        #[test]
        fn distances_are_nonnegative_and_symmetric(
            a in proptest::collection::vec(0.0f64..1.0, 32),
            b in proptest::collection::vec(0.0f64..1.0, 32),
            c in proptest::collection::vec(0.0f64..1.0, 32),
        ) {
            let g = Arc::new(Grid::line(32, -4.0, 4.0, Boundary::Periodic).unwrap());
            let d = |v: &[f64]| normalize(&ScalarField::new(g.clone(), v.iter().map(|x| x + 1e-3).collect()).unwrap()).unwrap();
            let (a, b, c) = (d(&a), d(&b), d(&c));
            let d = |x: &DensityField, y: &DensityField| {
                compare_densities(std::slice::from_ref(x), std::slice::from_ref(y)).unwrap()[0]
            };
            let (ab, ba, ac, cb) = (d(&a, &b), d(&b, &a), d(&a, &c), d(&c, &b));
            proptest::prop_assert!(ab.l1 >= 0.0 && ab.linf >= 0.0);
            proptest::prop_assert_eq!(ab, ba);
            proptest::prop_assert!(ab.l1 <= ac.l1 + cb.l1 + 1e-12);
            proptest::prop_assert!(ab.l1 <= 2.0 + 1e-12);
        }
    }
}
