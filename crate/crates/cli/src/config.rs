//! Scenario configuration: one JSON document per run, unknown keys rejected.

use std::path::Path;
use std::sync::Arc;

use edyn_core::numerics::normalize;
use edyn_core::wave::SplitScheme;
use edyn_core::{Boundary, DensityField, DriftPotential, Grid, ModelParams, Potential, ScalarField};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Solver steps per unit time when `dt_solver` is not given.
pub const DEFAULT_STEPS: f64 = 1e4;

/// Output samples per run when `cadence` is not given.
pub const DEFAULT_SAMPLES: f64 = 10.0;

/// Allowed mismatch when one time step has to divide another.
const COMMENSURATE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Ensemble,
    Fields,
    Wave,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Ensemble => "ensemble",
            Engine::Fields => "fields",
            Engine::Wave => "wave",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ensemble" => Some(Engine::Ensemble),
            "fields" => Some(Engine::Fields),
            "wave" => Some(Engine::Wave),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub boundary: Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub masses: Vec<f64>,
    pub eta: f64,
    pub xi: f64,
    /// Ensemble step `Δt`.
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub weight: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    /// `ρ ∝ exp(−(x−μ)²/2σ²)`, `Φ = p·x`.
    Gaussian {
        mu: f64,
        sigma: f64,
        #[serde(default)]
        phase_slope: f64,
    },
    /// Weighted Gaussians with a common phase slope.
    GaussianMixture {
        components: Vec<Component>,
        #[serde(default)]
        phase_slope: f64,
    },
    /// Node values of `ρ` (normalised on load) and `Φ`.
    Tabulated { rho: Vec<f64>, phi: Vec<f64> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftSpec {
    /// `S = Φ/η + ln √ρ` taken from the field solution at every ensemble step,
    /// so the walkers sample the same density the fields evolve.
    #[default]
    Fields,
    Polynomial { coefficients: Vec<f64> },
    GaussianFamily { log_sigma: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub expected: f64,
    pub tol: f64,
}

/// Pass/fail limits checked against the report; absent limits are not checked.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// `max_t L∞(ρ_fields, |Ψ|²)`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields_wave_linf: Option<f64>,
    /// `max_t L1(ρ_fields, |Ψ|²)`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields_wave_l1: Option<f64>,
    /// L1 between the ensemble density estimate and the field (or else wave)
    /// density at the last sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_l1: Option<f64>,
    /// Variance of the field and wave densities at the last sample, relative tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_variance: Option<Target>,
    /// `max_t L∞(ρ(t), ρ(0))` for the field and wave engines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationarity_linf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_drift_fields: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_drift_wave: Option<f64>,
    /// Ensemble Hamiltonian of the initial state, absolute tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<Target>,
    /// `max_t |⟨x⟩_fields − x_cl(t)|` against Newton's equation from the
    /// initial mean position and momentum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical_mean: Option<f64>,
    /// Smallest admissible arrow asymmetry over the samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_arrow_asymmetry: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Time between output samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cadence: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub grid: GridSpec,
    pub params: ParamsSpec,
    pub initial: InitialState,
    #[serde(default)]
    pub potential: Potential,
    #[serde(default)]
    pub drift: DriftSpec,
    pub engines: Vec<Engine>,
    #[serde(default = "default_walkers")]
    pub walkers: usize,
    #[serde(default)]
    pub seed: u64,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_solver: Option<f64>,
    #[serde(default)]
    pub scheme: SplitScheme,
    /// KDE bandwidth; Silverman's rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_walkers() -> usize {
    100_000
}

fn bad(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config {
        path: path.to_string(),
        message: msg.to_string(),
    }
}

/// Number of `small` steps in `big`, if it is a whole number.
fn ratio(big: f64, small: f64) -> Option<u64> {
    let r = big / small;
    let k = r.round();
    (k >= 1.0 && (r - k).abs() <= COMMENSURATE_TOL * k).then_some(k as u64)
}

/// Everything a run needs, derived once from a validated config.
#[derive(Clone, Debug)]
pub struct Setup {
    pub grid: Arc<Grid>,
    pub params: ModelParams,
    pub rho0: DensityField,
    pub phi0: ScalarField,
    pub drift: Option<DriftPotential>,
    pub dt_solver: f64,
    pub samples: u64,
    pub steps_per_sample: u64,
    /// Solver steps per ensemble step.
    pub substeps: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| bad("$", e))?;
        cfg.setup()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad("$", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialise")
    }

    pub fn has(&self, e: Engine) -> bool {
        self.engines.contains(&e)
    }

    pub fn solver_dt(&self) -> f64 {
        self.dt_solver.unwrap_or(self.duration / DEFAULT_STEPS)
    }

    /// Validates the config and builds grid, parameters and initial fields.
    pub fn setup(&self) -> Result<Setup, CliError> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(bad("name", "must be a non-empty [A-Za-z0-9_-] identifier"));
        }
        if self.engines.is_empty() {
            return Err(bad("engines", "at least one engine is required"));
        }
        let mut seen = self.engines.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.engines.len() {
            return Err(bad("engines", "engines are listed more than once"));
        }
        let grid = Grid::line(self.grid.n, self.grid.x_min, self.grid.x_max, self.grid.boundary)
            .map_err(|e| bad("grid", e))?;
        let grid = Arc::new(grid);
        let p = &self.params;
        if p.masses.len() != 1 {
            return Err(bad("params.masses", "scenarios describe one particle on a line"));
        }
        let params = ModelParams::single(p.masses[0], p.eta, p.xi, p.dt).map_err(|e| bad("params", e))?;
        if self.has(Engine::Wave) && (p.xi.is_nan() || p.xi <= 0.0) {
            return Err(bad("params.xi", "the wave engine needs xi > 0 (hbar = sqrt(8 xi))"));
        }
        self.potential.validate().map_err(|e| bad("potential", e))?;
        self.potential.on_grid(&grid).map_err(|e| bad("potential", e))?;
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(bad("duration", "must be positive"));
        }
        let dt_solver = self.solver_dt();
        if !(dt_solver.is_finite() && dt_solver > 0.0) {
            return Err(bad("dt_solver", "must be positive"));
        }
        if self.has(Engine::Ensemble) && self.walkers < 2 {
            return Err(bad("walkers", "the ensemble needs at least two walkers"));
        }
        if let Some(b) = self.bandwidth {
            if !(b.is_finite() && b > 0.0) {
                return Err(bad("bandwidth", "must be positive"));
            }
        }
        let cadence = self.output.cadence.unwrap_or(self.duration / DEFAULT_SAMPLES);
        let samples = ratio(self.duration, cadence)
            .ok_or_else(|| bad("output.cadence", "must divide the duration"))?;
        let steps_per_sample = ratio(cadence, dt_solver)
            .ok_or_else(|| bad("dt_solver", "must divide the output cadence"))?;
        let substeps = if self.has(Engine::Ensemble) {
            let k = ratio(p.dt, dt_solver)
                .ok_or_else(|| bad("params.dt", "the ensemble step must be a multiple of dt_solver"))?;
            if steps_per_sample % k != 0 {
                return Err(bad("params.dt", "the ensemble step must divide the output cadence"));
            }
            k
        } else {
            1
        };

        let (rho0, phi0) = self.initial_fields(&grid)?;
        let drift = match &self.drift {
            DriftSpec::Fields => None,
            DriftSpec::Polynomial { coefficients } => {
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(bad("drift.coefficients", "must be finite"));
                }
                Some(DriftPotential::Polynomial(coefficients.clone()))
            }
            DriftSpec::GaussianFamily { log_sigma } => {
                if log_sigma.iter().any(|c| !c.is_finite()) {
                    return Err(bad("drift.log_sigma", "must be finite"));
                }
                Some(DriftPotential::GaussianFamily {
                    log_sigma: log_sigma.clone(),
                })
            }
        };
        Ok(Setup {
            grid,
            params,
            rho0,
            phi0,
            drift,
            dt_solver,
            samples,
            steps_per_sample,
            substeps,
        })
    }

    fn initial_fields(&self, grid: &Arc<Grid>) -> Result<(DensityField, ScalarField), CliError> {
        let gaussian = |mu: f64, sigma: f64, x: f64| (-0.5 * ((x - mu) / sigma).powi(2)).exp();
        let (raw, phi) = match &self.initial {
            InitialState::Gaussian { mu, sigma, phase_slope } => {
                if !(sigma.is_finite() && *sigma > 0.0 && mu.is_finite() && phase_slope.is_finite()) {
                    return Err(bad("initial", "mu, phase_slope finite and sigma positive required"));
                }
                let raw = ScalarField::from_fn(grid.clone(), |x| gaussian(*mu, *sigma, x[0]));
                let phi = ScalarField::from_fn(grid.clone(), |x| phase_slope * x[0]);
                (raw, phi)
            }
            InitialState::GaussianMixture { components, phase_slope } => {
                if components.is_empty() {
                    return Err(bad("initial.components", "at least one component is required"));
                }
                for (i, c) in components.iter().enumerate() {
                    if !(c.weight.is_finite() && c.weight > 0.0 && c.sigma.is_finite() && c.sigma > 0.0 && c.mu.is_finite()) {
                        return Err(bad(&format!("initial.components[{i}]"), "positive weight and sigma, finite mu required"));
                    }
                }
                let raw = ScalarField::from_fn(grid.clone(), |x| {
                    components
                        .iter()
                        .map(|c| c.weight / c.sigma * gaussian(c.mu, c.sigma, x[0]))
                        .sum()
                });
                let phi = ScalarField::from_fn(grid.clone(), |x| phase_slope * x[0]);
                (raw, phi)
            }
            InitialState::Tabulated { rho, phi } => {
                if rho.len() != grid.len() {
                    return Err(bad("initial.rho", format!("expected {} values, got {}", grid.len(), rho.len())));
                }
                if phi.len() != grid.len() {
                    return Err(bad("initial.phi", format!("expected {} values, got {}", grid.len(), phi.len())));
                }
                (
                    ScalarField::new(grid.clone(), rho.clone()),
                    ScalarField::new(grid.clone(), phi.clone()),
                )
            }
        };
        let raw = raw.map_err(|e| bad("initial", e))?;
        let phi = phi.map_err(|e| bad("initial.phi", e))?;
        let rho = normalize(&raw).map_err(|e| bad("initial.rho", e))?;
        Ok((rho, phi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "name": "t",
            "grid": {"n": 64, "x_min": -8.0, "x_max": 8.0, "boundary": "periodic"},
            "params": {"masses": [1.0], "eta": 1.0, "xi": 0.125, "dt": 0.01},
            "initial": {"kind": "gaussian", "mu": 0.0, "sigma": 1.0},
            "engines": ["fields", "wave"],
            "duration": 0.1,
            "dt_solver": 0.001
        })
    }

    #[test]
    fn minimal_config_loads() {
        let cfg = ScenarioConfig::from_json(&minimal().to_string()).unwrap();
        let s = cfg.setup().unwrap();
        assert_eq!(s.samples, 10);
        assert_eq!(s.steps_per_sample, 10);
        assert_eq!(cfg.walkers, 100_000);
    }

    #[test]
    fn typo_is_rejected() {
        let mut v = minimal();
        v["params"]["xii"] = serde_json::json!(0.1);
        assert!(matches!(ScenarioConfig::from_json(&v.to_string()), Err(CliError::Config { .. })));
        let mut v = minimal();
        v["durration"] = serde_json::json!(1.0);
        assert!(ScenarioConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn errors_name_the_field() {
        let mut v = minimal();
        v["engines"] = serde_json::json!([]);
        match ScenarioConfig::from_json(&v.to_string()) {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "engines"),
            other => panic!("{other:?}"),
        }
        let mut v = minimal();
        v["params"]["xi"] = serde_json::json!(0.0);
        match ScenarioConfig::from_json(&v.to_string()) {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "params.xi"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_xi_is_fine_without_the_wave_engine() {
        let mut v = minimal();
        v["params"]["xi"] = serde_json::json!(0.0);
        v["engines"] = serde_json::json!(["fields"]);
        assert!(ScenarioConfig::from_json(&v.to_string()).is_ok());
    }

    #[test]
    fn steps_must_be_commensurate() {
        let mut v = minimal();
        v["dt_solver"] = serde_json::json!(0.003);
        assert!(ScenarioConfig::from_json(&v.to_string()).is_err());
        let mut v = minimal();
        v["engines"] = serde_json::json!(["ensemble"]);
        v["params"]["dt"] = serde_json::json!(0.0025);
        assert!(ScenarioConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = ScenarioConfig::from_json(&minimal().to_string()).unwrap();
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn valid_configs_round_trip(
            n in 16usize..256,
            half in 4.0f64..30.0,
            mu in -2.0f64..2.0,
            sigma in 0.3f64..2.0,
            slope in -1.0f64..1.0,
            seed in 0u64..1000,
        ) {
            let mut v = minimal();
            v["grid"]["n"] = n.into();
            v["grid"]["x_min"] = (-half).into();
            v["grid"]["x_max"] = half.into();
            v["initial"] = serde_json::json!({"kind": "gaussian", "mu": mu, "sigma": sigma, "phase_slope": slope});
            v["seed"] = seed.into();
            let cfg = ScenarioConfig::from_json(&v.to_string()).unwrap();
            proptest::prop_assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        }
    }
}
