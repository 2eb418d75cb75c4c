//! The twelve acceptance criteria, each returning a pass/fail outcome with the
//! measured numbers. `edyn verify` and the `acceptance` test target both run
//! these.

use std::fmt::Write as _;
use std::sync::Arc;

use edyn_core::ensemble::{arrow_asymmetry, step, step_statistics, Ensemble};
use edyn_core::fields::{energy_drift, fisher_functional, stability_bound, CoupledStepper};
use edyn_core::numerics::normalize;
use edyn_core::statmodel::{information_metric, variational_gap, Multipliers};
use edyn_core::wave::{from_fields, nonlinear_residual, regraduate, SplitScheme, WavePropagator};
use edyn_core::{Boundary, DriftPotential, FieldState, Grid, ModelParams, Potential, ScalarField};
use serde::Serialize;

use crate::config::{Engine, ScenarioConfig};
use crate::runner::{run_scenario, RunOutput};
use crate::scenarios::bundled;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{:>2}  {:<24} {}  {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

pub const CRITERIA: [(u8, &str); 12] = [
    (1, "equivalence"),
    (2, "stationarity"),
    (3, "energy-conservation"),
    (4, "ensemble-statistics"),
    (5, "ensemble-vs-fields"),
    (6, "fisher-metric"),
    (7, "information-metric"),
    (8, "max-ent-variational"),
    (9, "regraduation"),
    (10, "arrow-of-time"),
    (11, "classical-hybrid"),
    (12, "determinism"),
];

/// Runs one criterion by number.
pub fn criterion(id: u8) -> Outcome {
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|c| c.1)
        .unwrap_or_else(|| panic!("no criterion {id}"));
    let result = match id {
        1 => equivalence(),
        2 => stationarity(),
        3 => energy_conservation(),
        4 => ensemble_statistics(),
        5 => ensemble_vs_fields(),
        6 => fisher_metric(),
        7 => metric(),
        8 => variational(),
        9 => regraduation(),
        10 => arrow(),
        11 => classical_hybrid(),
        _ => determinism(),
    };
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    Outcome {
        id,
        name,
        passed,
        detail,
    }
}

pub fn run_all() -> Vec<Outcome> {
    CRITERIA.iter().map(|c| criterion(c.0)).collect()
}

type Verdict = Result<(bool, String), CliError>;

fn scenario(name: &str, edit: impl FnOnce(&mut ScenarioConfig)) -> Result<ScenarioConfig, CliError> {
    let mut cfg = bundled(name).expect("bundled scenario")?;
    edit(&mut cfg);
    Ok(cfg)
}

fn deterministic_engines(cfg: &mut ScenarioConfig) {
    cfg.engines.retain(|e| *e != Engine::Ensemble);
    cfg.thresholds.ensemble_l1 = None;
}

fn run(name: &str, edit: impl FnOnce(&mut ScenarioConfig)) -> Result<RunOutput, CliError> {
    run_scenario(&scenario(name, edit)?)
}

/// Collects `name value <= limit` fragments and their conjunction.
#[derive(Default)]
struct Tally {
    passed: bool,
    parts: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Self {
            passed: true,
            parts: Vec::new(),
        }
    }

    fn at_most(&mut self, what: &str, value: f64, limit: f64) {
        self.record(what, value, "<", limit, value < limit);
    }

    fn at_least(&mut self, what: &str, value: f64, limit: f64) {
        self.record(what, value, ">", limit, value > limit);
    }

    fn record(&mut self, what: &str, value: f64, rel: &str, limit: f64, ok: bool) {
        self.passed &= ok;
        self.parts.push(format!("{what}={value:.3e}{}{rel}{limit:.0e}", if ok { "" } else { " !" }));
    }

    fn note(&mut self, s: impl Into<String>) {
        self.parts.push(s.into());
    }

    fn fail(&mut self, s: impl Into<String>) {
        self.passed = false;
        self.parts.push(s.into());
    }

    fn done(self) -> Verdict {
        Ok((self.passed, self.parts.join("; ")))
    }
}

fn checked(t: &mut Tally, out: &RunOutput, check: &str, label: &str) {
    match out.report.check(check) {
        Some(c) => t.at_most(label, c.value, c.limit),
        None => t.fail(format!("{label}: check missing")),
    }
}

fn equivalence() -> Verdict {
    let mut t = Tally::new();
    let free = run("free-packet", deterministic_engines)?;
    checked(&mut t, &free, "fields_wave_linf", "free Linf");
    checked(&mut t, &free, "fields_wave_l1", "free L1");
    checked(&mut t, &free, "final_variance_fields", "free var(T) rel err");
    let coherent = run("ho-coherent", deterministic_engines)?;
    checked(&mut t, &coherent, "fields_wave_linf", "coherent Linf");
    checked(&mut t, &coherent, "fields_wave_l1", "coherent L1");
    t.done()
}

fn stationarity() -> Verdict {
    let mut t = Tally::new();
    let out = run("ho-ground", deterministic_engines)?;
    checked(&mut t, &out, "stationarity_fields", "fields");
    checked(&mut t, &out, "stationarity_wave", "wave");
    t.done()
}

/// Smooth bundled runs: densities stay resolved, so both deterministic engines apply.
const SMOOTH: [&str; 3] = ["free-packet", "ho-ground", "ho-coherent"];

fn energy_conservation() -> Verdict {
    let mut t = Tally::new();
    for name in SMOOTH {
        let out = run(name, deterministic_engines)?;
        checked(&mut t, &out, "energy_drift_fields", &format!("{name} fields"));
        checked(&mut t, &out, "energy_drift_wave", &format!("{name} wave"));
    }
    // on a coarse grid the time error dominates rounding
    let g = Arc::new(Grid::line(96, -12.0, 12.0, Boundary::Reflecting)?);
    let p = ModelParams::single(1.0, 1.0, 0.125, 1e-3)?;
    let v = Potential::Harmonic { mass: 1.0, omega: 1.0 };
    let rho = normalize(&ScalarField::from_fn(g.clone(), |x| (-0.5 * ((x[0] - 1.0) / 0.9).powi(2)).exp())?)?;
    let phi = ScalarField::from_fn(g.clone(), |x| 0.5 * x[0])?;
    let s0 = FieldState::new(rho.clone(), phi.clone(), 0.0)?;
    let fields_drift = |dt: f64| -> Result<f64, CliError> {
        let steps = (2.0 / dt).round() as u64;
        let mut st = CoupledStepper::new(&s0, &p, &v, dt)?;
        st.advance(steps)?;
        Ok(energy_drift(&[s0.clone(), st.state()?], &p, &v)?)
    };
    let dt = stability_bound(&g, &p);
    let ratio = fields_drift(dt)? / fields_drift(dt / 2.0)?;
    t.at_least("fields drift ratio under dt/2", ratio, 8.0);

    let gp = Arc::new(Grid::line(512, -20.0, 20.0, Boundary::Periodic)?);
    let rho = normalize(&ScalarField::from_fn(gp.clone(), |x| (-0.5 * ((x[0] - 1.0) / 0.9).powi(2)).exp())?)?;
    let phi = ScalarField::from_fn(gp.clone(), |x| 0.5 * x[0])?;
    let psi0 = from_fields(&rho, &phi, regraduate(p.xi())?)?;
    let wave_drift = |dt: f64| -> Result<f64, CliError> {
        let steps = (2.0 / dt).round() as u64;
        let mut prop = WavePropagator::new(gp.clone(), &p, &v, dt, SplitScheme::Fourth)?;
        let e0 = edyn_core::wave::wave_energy(&psi0, &v, &p)?;
        let mut psi = psi0.clone();
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            prop.step(&mut psi)?;
            worst = worst.max((edyn_core::wave::wave_energy(&psi, &v, &p)? - e0).abs() / e0);
        }
        Ok(worst)
    };
    let ratio = wave_drift(0.1)? / wave_drift(0.05)?;
    t.at_least("wave drift ratio under dt/2", ratio, 8.0);
    t.done()
}

fn ensemble_statistics() -> Verdict {
    const W: usize = 100_000;
    let c = 10.0;
    let mut t = Tally::new();
    let (mut lm, mut ls, mut lt) = (vec![], vec![], vec![]);
    // independent draws per step size, so the exponents are fitted to noisy data
    for (seed, dt) in [(40, 1e-2), (41, 1e-3), (42, 1e-4)] {
        let e = Ensemble::at_point(&[0.0], W, seed)?;
        let p = ModelParams::single(1.0, 1.0, 0.0, dt)?;
        let s = step_statistics(&e, &step(&e, &p, &DriftPotential::linear(c))?, &p)?;
        let (mean, var, se) = (s.sample_mean_shift[0], s.sample_variance[0], s.standard_errors[0]);
        t.at_most(&format!("dt={dt:.0e} |mean-bdt|/se"), (mean - c * dt).abs() / se, 3.0);
        t.at_most(&format!("dt={dt:.0e} var rel err"), (var / dt - 1.0).abs(), 0.02);
        lm.push(mean.ln());
        ls.push(var.sqrt().ln());
        lt.push(dt.ln());
    }
    let slope = |y: &[f64]| {
        let mx = lt.iter().sum::<f64>() / 3.0;
        let my = y.iter().sum::<f64>() / 3.0;
        let num: f64 = lt.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = lt.iter().map(|x| (x - mx).powi(2)).sum();
        num / den
    };
    t.at_most("|drift exponent-1|", (slope(&lm) - 1.0).abs(), 0.1);
    t.at_most("|fluctuation exponent-0.5|", (slope(&ls) - 0.5).abs(), 0.05);
    t.done()
}

fn ensemble_vs_fields() -> Verdict {
    let mut l1 = Vec::new();
    for seed in 0..10 {
        let out = run("free-packet", |c| {
            c.seed = seed;
            c.duration = 1.0;
            c.engines = vec![Engine::Fields, Engine::Ensemble];
            c.thresholds = Default::default();
            c.thresholds.ensemble_l1 = Some(0.05);
        })?;
        l1.push(out.report.check("ensemble_l1").map_or(f64::NAN, |c| c.value));
    }
    let mut sorted = l1.clone();
    sorted.sort_by(f64::total_cmp);
    let median = 0.5 * (sorted[4] + sorted[5]);
    let mut t = Tally::new();
    t.at_most("median L1 over 10 seeds", median, 0.05);
    t.note(format!("max {:.3e}", sorted[9]));
    t.done()
}

fn fisher_metric() -> Verdict {
    let g = Arc::new(Grid::line(512, -20.0, 20.0, Boundary::Reflecting)?);
    let p = ModelParams::single(1.0, 1.0, 0.125, 1e-3)?;
    let mut t = Tally::new();
    for sigma in [0.5, 1.0, 2.0] {
        let rho = normalize(&ScalarField::from_fn(g.clone(), |x| (-0.5 * (x[0] / sigma).powi(2)).exp())?)?;
        let i = fisher_functional(&rho, &p)?;
        t.at_most(&format!("sigma={sigma} |I-1/s2|"), (i.matrix[(0, 0)] - 1.0 / (sigma * sigma)).abs(), 1e-6);
    }
    t.done()
}

fn metric() -> Verdict {
    let p = ModelParams::new(vec![1.0, 2.0], 1.0, 0.0, 0.01, 1)?;
    let c = 0.5;
    let m = information_metric(&p, &DriftPotential::linear(0.5), &[0.1, -0.2], c)?;
    let mut t = Tally::new();
    for (a, mass) in [1.0, 2.0].into_iter().enumerate() {
        let expect = c * mass / (p.eta() * p.dt());
        t.at_most(&format!("gamma{a}{a} rel err"), (m.gamma[(a, a)] / expect - 1.0).abs(), 1e-3);
    }
    t.at_most("|gamma01|", m.gamma[(0, 1)].abs(), 1e-6);
    t.done()
}

fn variational() -> Verdict {
    let g = Arc::new(Grid::line(64, -3.0, 3.0, Boundary::Reflecting)?);
    let a = Multipliers::uniform(10.0, 1)?;
    let profiles = [
        ("constant", DriftPotential::constant()),
        ("linear", DriftPotential::linear(1.0)),
        ("quadratic", DriftPotential::Polynomial(vec![0.0, 1.0, -2.0])),
        ("cubic", DriftPotential::Polynomial(vec![0.2, -0.5, 0.0, 0.3])),
        ("gaussian-family", DriftPotential::GaussianFamily { log_sigma: vec![0.0, 0.2] }),
    ];
    let mut t = Tally::new();
    for (name, dp) in profiles {
        t.at_most(&format!("{name} TV"), variational_gap(&[0.1], &dp, &a, &g)?, 1e-4);
    }
    t.done()
}

fn gaussian_packet(g: &Arc<Grid>, mu: f64, sigma: f64, slope: f64) -> Result<(edyn_core::DensityField, ScalarField), CliError> {
    let rho = normalize(&ScalarField::from_fn(g.clone(), |x| (-0.5 * ((x[0] - mu) / sigma).powi(2)).exp())?)?;
    let phi = ScalarField::from_fn(g.clone(), |x| slope * x[0])?;
    Ok((rho, phi))
}

fn regraduation() -> Verdict {
    let g = Arc::new(Grid::line(512, -20.0, 20.0, Boundary::Periodic)?);
    let p = ModelParams::single(1.0, 1.0, 0.125, 1e-3)?;
    let hbar = regraduate(p.xi())?;
    let (rho, phi) = gaussian_packet(&g, 0.0, 1.0, 0.3)?;
    let mut t = Tally::new();
    let at = nonlinear_residual(&from_fields(&rho, &phi, hbar)?, hbar, &p)?;
    if at.residual == 0.0 {
        t.note("residual at hbar = 0 exactly");
    } else {
        t.fail(format!("residual at hbar = {:.3e}", at.residual));
    }
    let k = 1.1 * hbar;
    let off = nonlinear_residual(&from_fields(&rho, &phi, k)?, k, &p)?;
    t.at_least("residual at 1.1 hbar", off.residual, 1e-3);
    t.done()
}

fn arrow() -> Verdict {
    let mut t = Tally::new();
    let dp = DriftPotential::constant();
    let g = Arc::new(Grid::line(256, -8.0, 8.0, Boundary::Periodic)?);
    let flat = normalize(&ScalarField::constant(g.clone(), 1.0)?)?;
    t.at_most("uniform", arrow_asymmetry(&flat, &dp, 1.0, &g)?, 1e-8);
    let g = Arc::new(Grid::line(401, -10.0, 10.0, Boundary::Reflecting)?);
    let (rho, _) = gaussian_packet(&g, 0.0, 1.0, 0.0)?;
    t.at_most("gaussian", arrow_asymmetry(&rho, &dp, 1.0, &g)?, 1e-8);
    let demo = run("arrow-demo", |_| {})?;
    match demo.report.check("min_arrow_asymmetry") {
        Some(c) => t.at_least("bimodal (arrow-demo)", c.value, c.limit),
        None => t.fail("arrow-demo: check missing"),
    }

    // the law itself is reversible: conjugate, evolve, conjugate
    let gp = Arc::new(Grid::line(512, -20.0, 20.0, Boundary::Periodic)?);
    let p = ModelParams::single(1.0, 1.0, 0.125, 1e-3)?;
    let v = Potential::Harmonic { mass: 1.0, omega: 1.0 };
    let (rho, phi) = gaussian_packet(&gp, 1.5, 0.8, 0.7)?;
    let psi0 = from_fields(&rho, &phi, regraduate(p.xi())?)?;
    let mut prop = WavePropagator::new(gp, &p, &v, 1e-3, SplitScheme::Fourth)?;
    let mut psi = psi0.clone();
    prop.advance(&mut psi, 2000)?;
    let mut back = psi.conjugate();
    prop.advance(&mut back, 2000)?;
    t.at_most("wave round trip", back.conjugate().max_abs_diff(&psi0), 1e-8);
    t.done()
}

fn classical_hybrid() -> Verdict {
    let mut t = Tally::new();
    match run("classical-hybrid", |_| {}) {
        Ok(out) => checked(&mut t, &out, "classical_mean", "max |<x>-x_cl|"),
        Err(CliError::Numerical(e)) => t.fail(format!("fields engine stopped: {e}")),
        Err(e) => return Err(e),
    }
    t.done()
}

/// Every output byte of the runs that involve random numbers or thread pools.
fn fingerprint() -> Result<String, CliError> {
    let mut all = String::new();
    for name in ["free-packet", "arrow-demo"] {
        let out = run(name, |_| {})?;
        all.push_str(&out.csv);
        all.push_str(&out.report_json());
    }
    Ok(all)
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn determinism() -> Verdict {
    let first = fingerprint()?;
    let again = fingerprint()?;
    let one = in_pool(1, fingerprint)??;
    let four = in_pool(4, fingerprint)??;
    let mut t = Tally::new();
    let mut summary = format!("{} bytes", first.len());
    for (label, other) in [("rerun", &again), ("1 thread", &one), ("4 threads", &four)] {
        if *other == first {
            let _ = write!(summary, "; {label} identical");
        } else {
            t.fail(format!("{label} differs"));
        }
    }
    t.note(summary);
    t.done()
}
