//! Wave-function reference engine.
//!
//! `Ψ_k = √ρ e^{iΦ/k}` turns the coupled `(ρ, Φ)` equations into a
//! Schrödinger equation plus a nonlinear term proportional to
//! `k²/2 − 4ξ`. At `k = ħ = √(8ξ)` that term vanishes and the evolution is
//! linear and unitary, which is what this module integrates.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::numerics::{ops, Boundary, DensityField, Grid, ScalarField};
use crate::potential::Potential;
use crate::statmodel::ModelParams;

/// Tolerance on `∫|Ψ|² − 1`.
pub const WAVE_NORM_TOL: f64 = 1e-10;

/// Relative density below which the phase is not reported.
pub const PHASE_MASK: f64 = 1e-6;

/// `ħ = √(8ξ)`.
pub fn regraduate(xi: f64) -> Result<f64> {
    if !(xi.is_finite() && xi > 0.0) {
        return Err(argument(format!("xi must be positive to define hbar, got {xi}")));
    }
    Ok((8.0 * xi).sqrt())
}

/// Inverse of [`regraduate`]: `ξ = ħ²/8`.
pub fn xi_from_hbar(hbar: f64) -> f64 {
    hbar * hbar / 8.0
}

fn hbar_of(params: &ModelParams) -> Result<f64> {
    regraduate(params.xi())
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveField {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
    time: f64,
}

impl WaveField {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(argument("wave function does not match the grid"));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(argument("wave function has non-finite values"));
        }
        Ok(Self { grid, values, time })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn norm_squared(&self) -> f64 {
        let p: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        ops::integrate_values(&self.grid, &p)
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_squared();
        if !(n > 0.0) {
            return Err(argument("wave function vanishes"));
        }
        let s = 1.0 / n.sqrt();
        self.values.iter_mut().for_each(|v| *v *= s);
        Ok(self)
    }

    /// `|Ψ|²`, renormalised against quadrature rounding.
    pub fn density(&self) -> Result<DensityField> {
        let p: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        ops::normalize(&ScalarField::new(self.grid.clone(), p)?)
    }

    /// Complex conjugate, i.e. the time-reversed state.
    pub fn conjugate(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.conj()).collect(),
            time: self.time,
        }
    }

    /// Linear combination `a·self + b·other` (not renormalised).
    pub fn superpose(&self, a: Complex64, other: &WaveField, b: Complex64) -> Result<Self> {
        if *self.grid != *other.grid {
            return Err(argument("wave functions live on different grids"));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Self::new(self.grid.clone(), values, self.time)
    }

    /// `max |Ψ − Ψ'|`.
    pub fn max_abs_diff(&self, other: &WaveField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// `Ψ = √ρ e^{iΦ/k}`, normalised.
pub fn from_fields(rho: &DensityField, phi: &ScalarField, k: f64) -> Result<WaveField> {
    if !(k.is_finite() && k > 0.0) {
        return Err(argument(format!("k must be positive, got {k}")));
    }
    rho.field().same_grid(phi)?;
    let values = rho
        .values()
        .iter()
        .zip(phi.values())
        .map(|(r, p)| Complex64::from_polar(r.sqrt(), p / k))
        .collect();
    WaveField::new(rho.grid().clone(), values, 0.0)?.normalized()
}

/// Fields recovered from a wave function.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredFields {
    pub rho: DensityField,
    /// `k · arg Ψ`, unwrapped; zero outside the mask.
    pub phi: ScalarField,
    /// Nodes where `|Ψ|² > 10⁻⁶ max |Ψ|²`.
    pub mask: Vec<bool>,
}

/// `ρ = |Ψ|²`, `Φ = k arg Ψ` unwrapped from the node of largest `|Ψ|` by
/// nearest-branch increments along the grid lines.
pub fn to_fields(psi: &WaveField, k: f64) -> Result<RecoveredFields> {
    if !(k.is_finite() && k > 0.0) {
        return Err(argument(format!("k must be positive, got {k}")));
    }
    let g = &psi.grid;
    let rho = psi.density()?;
    let dens: Vec<f64> = psi.values.iter().map(|v| v.norm_sqr()).collect();
    let (peak, top) = dens
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
    let mask: Vec<bool> = dens.iter().map(|&d| d > PHASE_MASK * top).collect();
    let mut phase = vec![f64::NAN; g.len()];
    phase[peak] = psi.values[peak].arg();

    // Walks from `start` (already unwrapped) along `axis` in both directions.
    let walk = |phase: &mut Vec<f64>, start: usize, axis: usize| -> Result<()> {
        let ax = g.axis(axis);
        let stride = g.stride(axis);
        let pos = g.unflatten(start)[if g.dim() == 1 { 0 } else { axis }];
        for dir in [-1i64, 1] {
            let mut prev = start;
            let mut gap = false;
            let mut i = pos as i64 + dir;
            while i >= 0 && i < ax.n_points() as i64 {
                let cur = (start as i64 + (i - pos as i64) * stride as i64) as usize;
                if !mask[cur] {
                    gap = true;
                } else if gap {
                    return Err(Error::PhaseUnwrap(format!(
                        "|psi| vanishes between node {prev} and node {cur}"
                    )));
                } else {
                    let inc = (psi.values[cur] / psi.values[prev]).arg();
                    phase[cur] = phase[prev] + inc;
                    prev = cur;
                }
                i += dir;
            }
        }
        Ok(())
    };

    if g.dim() == 1 {
        walk(&mut phase, peak, 0)?;
    } else {
        walk(&mut phase, peak, 0)?;
        let n0 = g.axis(0).n_points();
        let row = g.unflatten(peak)[1];
        for i in 0..n0 {
            let start = g.flatten([i, row]);
            if mask[start] {
                walk(&mut phase, start, 1)?;
            } else if (0..g.axis(1).n_points()).any(|j| mask[g.flatten([i, j])]) {
                return Err(Error::PhaseUnwrap(format!(
                    "row {i} is not reachable from the peak column"
                )));
            }
        }
    }
    let phi = phase
        .iter()
        .zip(&mask)
        .map(|(p, &m)| if m { k * p } else { 0.0 })
        .collect();
    Ok(RecoveredFields {
        rho,
        phi: ScalarField::new(g.clone(), phi)?,
        mask,
    })
}

/// Composition used for one time step on periodic grids.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitScheme {
    /// Half kick, drift, half kick: second order.
    Strang,
    /// Triple-jump composition of three Strang steps: fourth order.
    #[default]
    Fourth,
}

#[derive(Clone)]
struct SubStep {
    kick: Vec<Complex64>,
    drift: Vec<Complex64>,
}

/// Forward and inverse plan for one axis.
type FftPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

#[derive(Clone)]
enum Method {
    Spectral {
        ffts: Vec<FftPair>,
        substeps: Vec<SubStep>,
    },
    CrankNicolson {
        // (1 + iΔt H/2ħ): constant off-diagonal, per-node diagonal
        off: Complex64,
        diag: Vec<Complex64>,
    },
}

/// Unitary propagator for the linear Schrödinger equation at `ħ = √(8ξ)`.
#[derive(Clone)]
pub struct WavePropagator {
    grid: Arc<Grid>,
    dt: f64,
    method: Method,
    steps: u64,
}

/// Angular wave numbers of the discrete Fourier modes, in FFT order.
pub fn wave_numbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let j = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            2.0 * PI * j / length
        })
        .collect()
}

fn kinetic_symbol(grid: &Grid, params: &ModelParams, hbar: f64) -> Vec<f64> {
    let ks: Vec<Vec<f64>> = grid
        .axes()
        .iter()
        .map(|a| wave_numbers(a.n_points(), a.length()))
        .collect();
    (0..grid.len())
        .map(|i| {
            let idx = grid.unflatten(i);
            (0..grid.dim())
                .map(|a| {
                    let k = ks[a][idx[if grid.dim() == 1 { 0 } else { a }]];
                    hbar * hbar * k * k / (2.0 * params.axis_mass(a))
                })
                .sum()
        })
        .collect()
}

impl WavePropagator {
    pub fn new(
        grid: Arc<Grid>,
        params: &ModelParams,
        v: &Potential,
        dt: f64,
        scheme: SplitScheme,
    ) -> Result<Self> {
        let hbar = hbar_of(params)?;
        if grid.dim() != params.coordinate_count() {
            return Err(argument("grid axes and model coordinates differ"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(argument(format!("dt_solver must be positive, got {dt}")));
        }
        let pot = v.on_grid(&grid)?;
        let periodic = grid.axes().iter().all(|a| a.boundary() == Boundary::Periodic);
        let reflecting = grid.axes().iter().all(|a| a.boundary() == Boundary::Reflecting);
        let method = if periodic {
            let mut planner = FftPlanner::new();
            let ffts = grid
                .axes()
                .iter()
                .map(|a| {
                    (
                        planner.plan_fft_forward(a.n_points()),
                        planner.plan_fft_inverse(a.n_points()),
                    )
                })
                .collect();
            let kin = kinetic_symbol(&grid, params, hbar);
            let weights: Vec<f64> = match scheme {
                SplitScheme::Strang => vec![1.0],
                SplitScheme::Fourth => {
                    let c = 2f64.powf(1.0 / 3.0);
                    let w1 = 1.0 / (2.0 - c);
                    vec![w1, -c * w1, w1]
                }
            };
            let substeps = weights
                .iter()
                .map(|w| {
                    let tau = w * dt;
                    SubStep {
                        kick: pot
                            .iter()
                            .map(|v| Complex64::from_polar(1.0, -v * tau / (2.0 * hbar)))
                            .collect(),
                        drift: kin
                            .iter()
                            .map(|e| Complex64::from_polar(1.0, -e * tau / hbar))
                            .collect(),
                    }
                })
                .collect();
            Method::Spectral { ffts, substeps }
        } else if reflecting && grid.dim() == 1 {
            // H = −ħ²/2m Δ_h + V with ψ = 0 beyond the end nodes
            let h = grid.axis(0).spacing();
            let t = hbar * hbar / (2.0 * params.axis_mass(0) * h * h);
            let c = Complex64::new(0.0, dt / (2.0 * hbar));
            Method::CrankNicolson {
                off: c * (-t),
                diag: pot.iter().map(|v| 1.0 + c * (2.0 * t + v)).collect(),
            }
        } else {
            return Err(argument(
                "the wave engine needs a periodic grid or a 1D reflecting grid",
            ));
        };
        Ok(Self {
            grid,
            dt,
            method,
            steps: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, psi: &mut WaveField) -> Result<()> {
        if *psi.grid != *self.grid {
            return Err(argument("wave function is on a different grid"));
        }
        match &self.method {
            Method::Spectral { ffts, substeps } => {
                let mut scratch = Vec::new();
                for s in substeps {
                    kick(&mut psi.values, &s.kick);
                    transform(&self.grid, ffts, &mut psi.values, &mut scratch, true);
                    kick(&mut psi.values, &s.drift);
                    transform(&self.grid, ffts, &mut psi.values, &mut scratch, false);
                    kick(&mut psi.values, &s.kick);
                }
            }
            Method::CrankNicolson { off, diag } => crank_nicolson(&mut psi.values, *off, diag),
        }
        if psi.values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Numerical {
                engine: "wave",
                step: self.steps,
                reason: "non-finite wave function".into(),
            });
        }
        psi.time += self.dt;
        self.steps += 1;
        Ok(())
    }

    pub fn advance(&mut self, psi: &mut WaveField, n_steps: u64) -> Result<()> {
        for _ in 0..n_steps {
            self.step(psi)?;
        }
        Ok(())
    }
}

fn kick(psi: &mut [Complex64], phase: &[Complex64]) {
    for (p, k) in psi.iter_mut().zip(phase) {
        *p *= k;
    }
}

/// In-place DFT over every axis; the inverse includes the `1/N` factor.
fn transform(
    grid: &Grid,
    ffts: &[FftPair],
    data: &mut [Complex64],
    scratch: &mut Vec<Complex64>,
    forward: bool,
) {
    for (a, (f, b)) in ffts.iter().enumerate() {
        let plan = if forward { f } else { b };
        let n = grid.axis(a).n_points();
        let stride = grid.stride(a);
        scratch.resize(plan.get_inplace_scratch_len(), Complex64::default());
        if stride == 1 {
            for chunk in data.chunks_mut(n) {
                plan.process_with_scratch(chunk, scratch);
            }
        } else {
            let mut line = vec![Complex64::default(); n];
            for start in 0..stride {
                for j in 0..n {
                    line[j] = data[start + j * stride];
                }
                plan.process_with_scratch(&mut line, scratch);
                for j in 0..n {
                    data[start + j * stride] = line[j];
                }
            }
        }
        if !forward {
            let s = 1.0 / n as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// `(1 + iΔtH/2ħ) ψ' = (1 − iΔtH/2ħ) ψ` with a Thomas solve.
fn crank_nicolson(psi: &mut [Complex64], off: Complex64, diag: &[Complex64]) {
    let n = psi.len();
    let one = Complex64::new(1.0, 0.0);
    // right-hand side: (2 − A) ψ where A = 1 + iΔtH/2ħ
    let rhs: Vec<Complex64> = (0..n)
        .map(|i| {
            let mut r = (2.0 * one - diag[i]) * psi[i];
            if i > 0 {
                r -= off * psi[i - 1];
            }
            if i + 1 < n {
                r -= off * psi[i + 1];
            }
            r
        })
        .collect();
    let mut c = vec![Complex64::default(); n];
    let mut d = vec![Complex64::default(); n];
    c[0] = off / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - off * c[i - 1];
        c[i] = off / m;
        d[i] = (rhs[i] - off * d[i - 1]) / m;
    }
    psi[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        psi[i] = d[i] - c[i] * psi[i + 1];
    }
}

/// One Strang step of the linear Schrödinger equation.
pub fn step_schrodinger(
    psi: &WaveField,
    v: &Potential,
    params: &ModelParams,
    dt_solver: f64,
) -> Result<WaveField> {
    let mut p = WavePropagator::new(psi.grid.clone(), params, v, dt_solver, SplitScheme::Strang)?;
    let mut out = psi.clone();
    p.step(&mut out)?;
    Ok(out)
}

/// `⟨Ψ|H|Ψ⟩ / ⟨Ψ|Ψ⟩`, with the kinetic term evaluated the way the propagator
/// sees it (spectrally on periodic grids, three-point on reflecting ones).
pub fn wave_energy(psi: &WaveField, v: &Potential, params: &ModelParams) -> Result<f64> {
    let hbar = hbar_of(params)?;
    let g = &psi.grid;
    if g.dim() != params.coordinate_count() {
        return Err(argument("grid axes and model coordinates differ"));
    }
    let pot = v.on_grid(g)?;
    let dens: Vec<f64> = psi.values.iter().map(|v| v.norm_sqr()).collect();
    let norm = ops::integrate_values(g, &dens);
    let potential: f64 = ops::integrate_values(
        g,
        &dens.iter().zip(&pot).map(|(d, v)| d * v).collect::<Vec<_>>(),
    );
    let periodic = g.axes().iter().all(|a| a.boundary() == Boundary::Periodic);
    let kinetic = if periodic {
        let mut planner = FftPlanner::new();
        let ffts: Vec<_> = g
            .axes()
            .iter()
            .map(|a| (planner.plan_fft_forward(a.n_points()), planner.plan_fft_inverse(a.n_points())))
            .collect();
        let mut hat = psi.values.clone();
        transform(g, &ffts, &mut hat, &mut Vec::new(), true);
        let kin = kinetic_symbol(g, params, hbar);
        // Parseval: Σ|ψ|² = Σ|ψ̂|²/N
        let cell: f64 = g.axes().iter().map(|a| a.spacing()).product();
        cell / g.len() as f64 * hat.iter().zip(&kin).map(|(h, e)| e * h.norm_sqr()).sum::<f64>()
    } else if g.dim() == 1 {
        let h = g.axis(0).spacing();
        let t = hbar * hbar / (2.0 * params.axis_mass(0) * h * h);
        let p = &psi.values;
        let n = p.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mut lap = 2.0 * p[i];
            if i > 0 {
                lap -= p[i - 1];
            }
            if i + 1 < n {
                lap -= p[i + 1];
            }
            acc += (p[i].conj() * lap).re * t * h;
        }
        acc
    } else {
        return Err(argument("wave energy needs a periodic grid or a 1D reflecting grid"));
    };
    Ok((kinetic + potential) / norm)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonlinearResidual {
    /// `k²/2 − 4ξ`
    pub coefficient: f64,
    /// L2 norm of `(k²/2 − 4ξ) m^{AB} (∂_A∂_B|Ψ| / |Ψ|) Ψ` over the mask.
    pub residual: f64,
}

/// Size of the term that keeps the `Ψ_k` equation nonlinear for `k ≠ ħ`.
pub fn nonlinear_residual(
    psi: &WaveField,
    k: f64,
    params: &ModelParams,
) -> Result<NonlinearResidual> {
    if !(k.is_finite() && k > 0.0) {
        return Err(argument(format!("k must be positive, got {k}")));
    }
    let g = &psi.grid;
    if g.dim() != params.coordinate_count() {
        return Err(argument("grid axes and model coordinates differ"));
    }
    let hbar = (8.0 * params.xi()).sqrt();
    // (k − ħ)(k + ħ)/2 vanishes exactly at k = ħ
    let coefficient = 0.5 * (k - hbar) * (k + hbar);
    if coefficient == 0.0 {
        return Ok(NonlinearResidual {
            coefficient,
            residual: 0.0,
        });
    }
    let dens: Vec<f64> = psi.values.iter().map(|v| v.norm_sqr()).collect();
    let top = dens.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(argument("wave function vanishes"));
    }
    let floor = crate::fields::DENSITY_FLOOR * top;
    let l: Vec<f64> = dens.iter().map(|d| d.max(floor).ln()).collect();
    let mut ratio = vec![0.0; g.len()];
    for a in 0..g.dim() {
        let inv_m = 1.0 / params.axis_mass(a);
        let d1 = ops::partial_values(g, &l, a);
        let d2 = ops::second_partial_values(g, &l, a);
        for ((r, d1), d2) in ratio.iter_mut().zip(&d1).zip(&d2) {
            *r += inv_m * (0.5 * d2 + 0.25 * d1 * d1);
        }
    }
    let integrand: Vec<f64> = (0..g.len())
        .map(|i| {
            if dens[i] > PHASE_MASK * top {
                let t = coefficient * ratio[i];
                t * t * dens[i]
            } else {
                0.0
            }
        })
        .collect();
    Ok(NonlinearResidual {
        coefficient,
        residual: ops::integrate_values(g, &integrand).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic(n: usize, a: f64, b: f64) -> Arc<Grid> {
        Arc::new(Grid::line(n, a, b, Boundary::Periodic).unwrap())
    }

    fn unit() -> ModelParams {
        ModelParams::single(1.0, 1.0, 0.125, 1e-3).unwrap()
    }

    #[test]
    fn regraduation_arithmetic() {
        assert_eq!(regraduate(0.125).unwrap(), 1.0);
        assert_eq!(regraduate(0.5).unwrap(), 2.0);
        assert!(regraduate(0.0).is_err());
        assert!(regraduate(-1.0).is_err());
        for hbar in [0.3, 1.0, 1.7, 4.0] {
            assert!((regraduate(xi_from_hbar(hbar)).unwrap() - hbar).abs() <= 1e-15 * hbar);
        }
    }

    #[test]
    fn coefficient_arithmetic() {
        let g = periodic(64, -10.0, 10.0);
        let psi = WaveField::new(g.clone(), vec![Complex64::new(1.0, 0.0); 64], 0.0)
            .unwrap()
            .normalized()
            .unwrap();
        let p = ModelParams::single(1.0, 1.0, 0.25, 0.01).unwrap();
        let r = nonlinear_residual(&psi, 1.0, &p).unwrap();
        assert!((r.coefficient + 0.5).abs() < 1e-15);
        assert!(nonlinear_residual(&psi, 0.0, &p).is_err());
    }

    #[test]
    fn real_wave_has_zero_phase() {
        let g = periodic(128, -10.0, 10.0);
        let rho = ops::normalize(&ScalarField::from_fn(g.clone(), |x| (-x[0] * x[0]).exp()).unwrap()).unwrap();
        let psi = from_fields(&rho, &ScalarField::zeros(g.clone()), 1.0).unwrap();
        assert!(psi.values().iter().all(|v| v.im == 0.0 && v.re >= 0.0));
        let back = to_fields(&psi, 1.0).unwrap();
        assert!(back.phi.values().iter().all(|p| *p == 0.0));
        assert!(from_fields(&rho, &ScalarField::zeros(g), -1.0).is_err());
    }

    #[test]
    fn node_in_path_is_an_unwrap_error() {
        let g = periodic(128, -10.0, 10.0);
        let bumps = |x: &[f64]| (-4.0 * (x[0] - 4.0).powi(2)).exp() + (-4.0 * (x[0] + 4.0).powi(2)).exp();
        let rho = ops::normalize(&ScalarField::from_fn(g.clone(), bumps).unwrap()).unwrap();
        let psi = from_fields(&rho, &ScalarField::zeros(g), 1.0).unwrap();
        assert!(matches!(to_fields(&psi, 1.0), Err(Error::PhaseUnwrap(_))));
    }

    #[test]
    fn needs_positive_xi() {
        let g = periodic(64, -10.0, 10.0);
        let p = ModelParams::single(1.0, 1.0, 0.0, 0.01).unwrap();
        assert!(WavePropagator::new(g, &p, &Potential::None, 1e-3, SplitScheme::Strang).is_err());
    }

    #[test]
    fn crank_nicolson_is_unitary() {
        let g = Arc::new(Grid::line(400, -20.0, 20.0, Boundary::Reflecting).unwrap());
        let rho = ops::normalize(&ScalarField::from_fn(g.clone(), |x| (-x[0] * x[0]).exp()).unwrap()).unwrap();
        let phi = ScalarField::from_fn(g.clone(), |x| 0.7 * x[0]).unwrap();
        let mut psi = from_fields(&rho, &phi, 1.0).unwrap();
        let v = Potential::Harmonic { mass: 1.0, omega: 1.0 };
        let mut p = WavePropagator::new(g, &unit(), &v, 1e-2, SplitScheme::Fourth).unwrap();
        let e0 = wave_energy(&psi, &v, &unit()).unwrap();
        p.advance(&mut psi, 1000).unwrap();
        assert!((psi.norm_squared() - 1.0).abs() < 1e-8);
        assert!((wave_energy(&psi, &v, &unit()).unwrap() / e0 - 1.0).abs() < 1e-10);
    }
}
