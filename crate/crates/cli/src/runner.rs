//! Runs the requested engines side by side from one initial `(ρ, Φ)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use edyn_core::ensemble::{arrow_asymmetry, empirical_density, Ensemble};
use edyn_core::fields::{
    current_velocity, energy_drift, ensemble_hamiltonian, osmotic_velocity, quantum_potential,
    recovered_entropy, CoupledStepper,
};
use edyn_core::numerics::partial;
use edyn_core::wave::{from_fields, regraduate, wave_energy, WaveField, WavePropagator};
use edyn_core::{DensityField, DriftPotential, FieldState, ModelParams, Potential};

use crate::config::{Engine, ScenarioConfig, Setup};
use crate::report::{compare_densities, Check, ComparisonReport, PairDistance, Sample};
use crate::CliError;

/// Report plus the CSV time series, both as the exact bytes that get written.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: ComparisonReport,
    pub csv: String,
}

impl RunOutput {
    pub fn report_json(&self) -> String {
        self.report.to_json()
    }

    /// Writes `<name>.csv` and `<name>.report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let name = &self.report.scenario;
        let csv = dir.join(format!("{name}.csv"));
        let json = dir.join(format!("{name}.report.json"));
        for (path, body) in [(&csv, &self.csv), (&json, &self.report_json())] {
            std::fs::write(path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(vec![csv, json])
    }
}

const CSV_HEADER: &str = "t,x,rho_fields,rho_wave,rho_ensemble,phi,v,u,Q\n";

struct Snapshot {
    t: f64,
    densities: BTreeMap<Engine, DensityField>,
    fields: Option<FieldState>,
}

/// Newton's equation for one particle, RK4 at the solver step.
struct Classical {
    x: f64,
    v: f64,
}

impl Classical {
    fn force(v: &Potential, mass: f64, x: f64) -> f64 {
        let h = 1e-5 * (1.0 + x.abs());
        -(v.value(&[x + h]) - v.value(&[x - h])) / (2.0 * h * mass)
    }

    fn advance(&mut self, pot: &Potential, mass: f64, dt: f64, steps: u64) {
        for _ in 0..steps {
            let (x, v) = (self.x, self.v);
            let a1 = Self::force(pot, mass, x);
            let a2 = Self::force(pot, mass, x + 0.5 * dt * v);
            let a3 = Self::force(pot, mass, x + 0.5 * dt * (v + 0.5 * dt * a1));
            let a4 = Self::force(pot, mass, x + dt * (v + 0.5 * dt * a2));
            self.x = x + dt * v + dt * dt / 6.0 * (a1 + a2 + a3);
            self.v = v + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        }
    }
}

fn numerical(e: edyn_core::Error) -> CliError {
    CliError::Numerical(e)
}

/// Runs one scenario end to end; nothing is written.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, CliError> {
    let setup = cfg.setup()?;
    let Setup {
        grid,
        params,
        rho0,
        phi0,
        drift,
        dt_solver,
        samples,
        steps_per_sample,
        substeps,
    } = setup;
    let v = &cfg.potential;
    let s0 = FieldState::new(rho0.clone(), phi0.clone(), 0.0).map_err(numerical)?;

    // the field solution also drives the walkers when the drift comes from it
    let need_fields = cfg.has(Engine::Fields) || (cfg.has(Engine::Ensemble) && drift.is_none());
    let mut fields = if need_fields {
        Some(CoupledStepper::new(&s0, &params, v, dt_solver).map_err(|e| match e {
            edyn_core::Error::Argument(m) => CliError::Config {
                path: "dt_solver".into(),
                message: m,
            },
            e => numerical(e),
        })?)
    } else {
        None
    };
    let mut wave = if cfg.has(Engine::Wave) {
        let hbar = regraduate(params.xi()).map_err(numerical)?;
        let psi = from_fields(&rho0, &phi0, hbar).map_err(numerical)?;
        let prop = WavePropagator::new(grid.clone(), &params, v, dt_solver, cfg.scheme).map_err(numerical)?;
        Some((prop, psi))
    } else {
        None
    };
    let mut ensemble = if cfg.has(Engine::Ensemble) {
        Some(Ensemble::sample_density(&rho0, cfg.walkers, cfg.seed).map_err(numerical)?)
    } else {
        None
    };
    let mut classical = cfg.thresholds.classical_mean.map(|_| {
        let dphi = partial(&phi0, 0).expect("one axis");
        let p: Vec<f64> = dphi.values().iter().zip(rho0.values()).map(|(d, r)| d * r).collect();
        let p = edyn_core::numerics::ops::integrate_values(&grid, &p);
        Classical {
            x: rho0.mean(0),
            v: p / params.axis_mass(0),
        }
    });
    let arrow = cfg.thresholds.min_arrow_asymmetry.is_some();

    let snapshot = |t: f64,
                    fields: &Option<CoupledStepper>,
                    wave: &Option<(WavePropagator, WaveField)>,
                    ensemble: &Option<Ensemble>|
     -> Result<Snapshot, CliError> {
        let mut densities = BTreeMap::new();
        let mut state = None;
        if let Some(st) = fields {
            let s = st.state().map_err(numerical)?;
            if cfg.has(Engine::Fields) {
                densities.insert(Engine::Fields, s.rho().clone());
                state = Some(s);
            }
        }
        if let Some((_, psi)) = wave {
            densities.insert(Engine::Wave, psi.density().map_err(numerical)?);
        }
        if let Some(e) = ensemble {
            densities.insert(Engine::Ensemble, empirical_density(e, &grid, cfg.bandwidth).map_err(numerical)?);
        }
        Ok(Snapshot {
            t,
            densities,
            fields: state,
        })
    };

    let mut snaps = vec![snapshot(0.0, &fields, &wave, &ensemble)?];
    let mut positions = vec![classical.as_ref().map(|c| c.x)];
    let mut energies = vec![wave.as_ref().map(|(_, psi)| wave_energy(psi, v, &params)).transpose().map_err(numerical)?];
    for k in 1..=samples {
        if let Some(e) = ensemble.as_mut() {
            for _ in 0..steps_per_sample / substeps {
                match (&drift, fields.as_mut()) {
                    (Some(dp), _) => e.advance(&params, dp).map_err(numerical)?,
                    (None, Some(st)) => {
                        let s = recovered_entropy(&st.state().map_err(numerical)?, &params).map_err(numerical)?;
                        let dp = DriftPotential::tabulated(s).map_err(numerical)?;
                        e.advance(&params, &dp).map_err(numerical)?;
                    }
                    (None, None) => unreachable!("the field stepper exists whenever it drives the walkers"),
                }
                if drift.is_none() {
                    fields.as_mut().expect("driving fields").advance(substeps).map_err(numerical)?;
                }
            }
            if drift.is_some() {
                if let Some(st) = fields.as_mut() {
                    st.advance(steps_per_sample).map_err(numerical)?;
                }
            }
        } else if let Some(st) = fields.as_mut() {
            st.advance(steps_per_sample).map_err(numerical)?;
        }
        if let Some((prop, psi)) = wave.as_mut() {
            prop.advance(psi, steps_per_sample).map_err(numerical)?;
        }
        if let Some(c) = classical.as_mut() {
            c.advance(v, params.axis_mass(0), dt_solver, steps_per_sample);
        }
        let t = k as f64 * steps_per_sample as f64 * dt_solver;
        snaps.push(snapshot(t, &fields, &wave, &ensemble)?);
        positions.push(classical.as_ref().map(|c| c.x));
        energies.push(wave.as_ref().map(|(_, psi)| wave_energy(psi, v, &params)).transpose().map_err(numerical)?);
    }

    let report = assemble(cfg, &params, drift.as_ref(), dt_solver, &s0, &snaps, &positions, &energies, arrow)?;
    let csv = series_csv(&params, &snaps)?;
    Ok(RunOutput { report, csv })
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    cfg: &ScenarioConfig,
    params: &ModelParams,
    drift: Option<&DriftPotential>,
    dt_solver: f64,
    s0: &FieldState,
    snaps: &[Snapshot],
    positions: &[Option<f64>],
    energies: &[Option<f64>],
    arrow: bool,
) -> Result<ComparisonReport, CliError> {
    let v = &cfg.potential;
    let engines: Vec<Engine> = snaps[0].densities.keys().copied().collect();
    let series = |e: Engine| -> Vec<DensityField> { snaps.iter().map(|s| s.densities[&e].clone()).collect() };
    let mut pairs = BTreeMap::new();
    for (i, &a) in engines.iter().enumerate() {
        for &b in &engines[i + 1..] {
            pairs.insert((a, b), compare_densities(&series(a), &series(b)).map_err(numerical)?);
        }
    }
    let grid = s0.grid().clone();
    let mut samples = Vec::with_capacity(snaps.len());
    for (k, snap) in snaps.iter().enumerate() {
        let mut s = Sample {
            t: snap.t,
            ..Sample::default()
        };
        for ((a, b), d) in &pairs {
            s.distances.push(PairDistance {
                a: *a,
                b: *b,
                l1: d[k].l1,
                linf: d[k].linf,
            });
        }
        for (e, rho) in &snap.densities {
            s.mean.insert(*e, rho.mean(0));
            s.variance.insert(*e, rho.variance(0));
            if *e != Engine::Ensemble {
                let d0 = &snaps[0].densities[e];
                s.change_from_initial.insert(*e, rho.field().max_abs_diff(d0.field()).map_err(numerical)?);
            }
        }
        if let Some(f) = &snap.fields {
            s.hamiltonian = Some(ensemble_hamiltonian(f, params, v).map_err(numerical)?);
        }
        s.wave_energy = energies[k];
        s.classical_position = positions[k];
        if arrow {
            let rho = snap
                .densities
                .get(&Engine::Ensemble)
                .or_else(|| snap.densities.get(&Engine::Fields))
                .or_else(|| snap.densities.get(&Engine::Wave))
                .expect("some engine ran");
            let dp = drift.cloned().unwrap_or_else(DriftPotential::constant);
            s.arrow_asymmetry = Some(arrow_asymmetry(rho, &dp, params.alphas()[0], &grid).map_err(numerical)?);
        }
        samples.push(s);
    }

    let mut energy = BTreeMap::new();
    let states: Vec<FieldState> = snaps.iter().filter_map(|s| s.fields.clone()).collect();
    if states.len() >= 2 {
        energy.insert(Engine::Fields, energy_drift(&states, params, v).map_err(numerical)?);
    }
    let e: Vec<f64> = energies.iter().flatten().copied().collect();
    if let Some(&e0) = e.first() {
        let worst = e.iter().map(|x| (x - e0).abs()).fold(0.0, f64::max);
        energy.insert(Engine::Wave, worst / e0.abs().max(1e-12));
    }

    let th = &cfg.thresholds;
    let mut checks = Vec::new();
    let max_over = |f: &dyn Fn(&Sample) -> Option<f64>| -> Option<f64> {
        samples.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.into_iter().fold(0.0, f64::max))
    };
    let fw = |s: &Sample| s.distances.iter().find(|d| d.a == Engine::Fields && d.b == Engine::Wave).cloned();
    if let Some(limit) = th.fields_wave_linf {
        let value = max_over(&|s| fw(s).map(|d| d.linf)).unwrap_or(f64::NAN);
        checks.push(Check::at_most("fields_wave_linf", value, limit));
    }
    if let Some(limit) = th.fields_wave_l1 {
        let value = max_over(&|s| fw(s).map(|d| d.l1)).unwrap_or(f64::NAN);
        checks.push(Check::at_most("fields_wave_l1", value, limit));
    }
    if let Some(limit) = th.ensemble_l1 {
        let last = samples.last().expect("at least one sample");
        let value = last
            .distances
            .iter()
            .find(|d| d.a == Engine::Ensemble && d.b == Engine::Fields)
            .or_else(|| last.distances.iter().find(|d| d.a == Engine::Ensemble && d.b == Engine::Wave))
            .map_or(f64::NAN, |d| d.l1);
        checks.push(Check::at_most("ensemble_l1", value, limit));
    }
    if let Some(target) = &th.final_variance {
        let last = samples.last().expect("at least one sample");
        for e in [Engine::Fields, Engine::Wave] {
            if let Some(var) = last.variance.get(&e) {
                let rel = (var / target.expected - 1.0).abs();
                checks.push(Check::at_most(format!("final_variance_{}", e.name()), rel, target.tol));
            }
        }
    }
    if let Some(limit) = th.stationarity_linf {
        for e in [Engine::Fields, Engine::Wave] {
            if let Some(value) = max_over(&|s| s.change_from_initial.get(&e).copied()) {
                checks.push(Check::at_most(format!("stationarity_{}", e.name()), value, limit));
            }
        }
    }
    if let Some(limit) = th.energy_drift_fields {
        checks.push(Check::at_most(
            "energy_drift_fields",
            energy.get(&Engine::Fields).copied().unwrap_or(f64::NAN),
            limit,
        ));
    }
    if let Some(limit) = th.energy_drift_wave {
        checks.push(Check::at_most(
            "energy_drift_wave",
            energy.get(&Engine::Wave).copied().unwrap_or(f64::NAN),
            limit,
        ));
    }
    if let Some(target) = &th.hamiltonian {
        let h0 = ensemble_hamiltonian(s0, params, v).map_err(numerical)?;
        checks.push(Check::at_most("hamiltonian", (h0 - target.expected).abs(), target.tol));
    }
    if let Some(limit) = th.classical_mean {
        let value = max_over(&|s| Some((s.mean.get(&Engine::Fields)? - s.classical_position?).abs()))
            .unwrap_or(f64::NAN);
        checks.push(Check::at_most("classical_mean", value, limit));
    }
    if let Some(limit) = th.min_arrow_asymmetry {
        let value = samples
            .iter()
            .filter_map(|s| s.arrow_asymmetry)
            .fold(f64::INFINITY, f64::min);
        checks.push(Check::at_least("min_arrow_asymmetry", value, limit));
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(ComparisonReport {
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        engines: cfg.engines.clone(),
        dt_solver,
        samples,
        energy_drift: energy,
        checks,
        passed,
    })
}

fn cell(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(v) = v {
        // 17 significant digits: exact round trip for every f64
        let _ = write!(out, "{v:.16e}");
    }
}

fn series_csv(params: &ModelParams, snaps: &[Snapshot]) -> Result<String, CliError> {
    let mut out = String::from(CSV_HEADER);
    for snap in snaps {
        let grid = snap.densities.values().next().expect("some engine ran").grid().clone();
        let xs = grid.axis(0).coords();
        let extras = match &snap.fields {
            Some(s) => {
                let v = current_velocity(s, params).map_err(numerical)?;
                let u = osmotic_velocity(s.rho(), params).map_err(numerical)?;
                let q = quantum_potential(s.rho(), params).map_err(numerical)?;
                Some((s.phi().clone(), v[0].clone(), u.u[0].clone(), q))
            }
            None => None,
        };
        let col = |e: Engine, i: usize| snap.densities.get(&e).map(|d| d.values()[i]);
        for (i, x) in xs.iter().enumerate() {
            let _ = write!(out, "{:.16e},{x:.16e}", snap.t);
            cell(&mut out, col(Engine::Fields, i));
            cell(&mut out, col(Engine::Wave, i));
            cell(&mut out, col(Engine::Ensemble, i));
            match &extras {
                Some((phi, v, u, q)) => {
                    for f in [phi, v, u, q] {
                        cell(&mut out, Some(f.values()[i]));
                    }
                }
                None => out.push_str(",,,,"),
            }
            out.push('\n');
        }
    }
    Ok(out)
}
