//! Deterministic evolution of the epistemic pair `(ρ, Φ)`.
//!
//! The density obeys the continuity equation `∂tρ = −∂_A(ρ m^{AB} ∂_BΦ)`
//! and the phase the generalised Hamilton–Jacobi equation
//!
//! ```text
//! ∂tΦ = −½ m^{AB} ∂_AΦ ∂_BΦ − V + 4ξ m^{AB} ∂_A∂_B√ρ / √ρ
//! ```
//!
//! The stepper works with `ℓ = ln ρ` instead of `ρ`. Both equations are then
//! polynomial in the derivatives of `ℓ` and `Φ`:
//!
//! ```text
//! ∂tℓ = −m^{AB}(∂_AΦ ∂_Bℓ + ∂_A∂_BΦ)
//! ∂tΦ = −½ m^{AB} ∂_AΦ ∂_BΦ − V + 4ξ m^{AB}(½ ∂_A∂_Bℓ + ¼ ∂_Aℓ ∂_Bℓ)
//! ```
//!
//! Gaussian tails stay representable far below the `f64` range of `ρ`, and
//! the second-order stencils are exact on quadratic `ℓ` and `Φ`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{argument, Error, Result};
use crate::numerics::ops::{self, partial_values, second_partial_values};
use crate::numerics::{Boundary, DensityField, Grid, ScalarField};
use crate::potential::Potential;
use crate::statmodel::{DriftPotential, ModelParams};

/// Relative floor under `ρ` in the diagnostic `√ρ` and `ln ρ` terms.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Share of floored nodes above which a precision warning is raised.
pub const FLOOR_WARNING_FRACTION: f64 = 0.01;

/// Largest admissible `dt_solver · ħ / (m h²)`.
pub const STABILITY_FACTOR: f64 = 0.2;

/// Largest admissible `|∫ρ − 1|` after one step, before renormalisation.
pub const MASS_DRIFT_TOL: f64 = 1e-6;

/// Floor used when converting `ρ → ln ρ` for evolution.
const LOG_FLOOR: f64 = f64::MIN_POSITIVE;

#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    rho: DensityField,
    phi: ScalarField,
    time: f64,
}

impl FieldState {
    pub fn new(rho: DensityField, phi: ScalarField, time: f64) -> Result<Self> {
        rho.field().same_grid(&phi)?;
        Ok(Self { rho, phi, time })
    }

    pub fn rho(&self) -> &DensityField {
        &self.rho
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.rho.grid()
    }

    /// Same state with `Φ → Φ + c`.
    pub fn shift_phase(&self, c: f64) -> Result<Self> {
        Self::new(self.rho.clone(), self.phi.map(|p| p + c)?, self.time)
    }
}

/// How many nodes sat below the density floor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FloorReport {
    pub floored: usize,
    pub total: usize,
}

impl FloorReport {
    pub fn fraction(&self) -> f64 {
        self.floored as f64 / self.total as f64
    }

    /// More than 1% of the grid is floored: results there carry no precision.
    pub fn precision_warning(&self) -> bool {
        self.fraction() > FLOOR_WARNING_FRACTION
    }
}

fn check_axes(grid: &Grid, params: &ModelParams) -> Result<()> {
    if grid.dim() != params.coordinate_count() {
        return Err(argument(format!(
            "grid has {} axes, the model {} coordinates",
            grid.dim(),
            params.coordinate_count()
        )));
    }
    Ok(())
}

fn log_density(rho: &DensityField) -> (Vec<f64>, FloorReport) {
    let (v, floored) = rho.floored_values(DENSITY_FLOOR);
    let report = FloorReport {
        floored,
        total: v.len(),
    };
    (v.into_iter().map(f64::ln).collect(), report)
}

fn field(grid: &Arc<Grid>, values: Vec<f64>) -> Result<ScalarField> {
    ScalarField::new(grid.clone(), values)
}

/// `v^A = m^{AB} ∂_BΦ`, one field per axis.
pub fn current_velocity(s: &FieldState, params: &ModelParams) -> Result<Vec<ScalarField>> {
    let g = s.grid();
    check_axes(g, params)?;
    (0..g.dim())
        .map(|a| {
            let inv_m = 1.0 / params.axis_mass(a);
            let d = partial_values(g, s.phi.values(), a);
            field(g, d.into_iter().map(|x| x * inv_m).collect())
        })
        .collect()
}

/// `Φ = η(S − ln √ρ)`: the phase whose current is the drift plus the
/// osmotic velocity.
pub fn phase_from_entropy(
    rho: &DensityField,
    dp: &DriftPotential,
    params: &ModelParams,
) -> Result<ScalarField> {
    let g = rho.grid();
    let s = dp.on_grid(g)?;
    let (l, _) = log_density(rho);
    field(
        g,
        s.iter()
            .zip(&l)
            .map(|(s, l)| params.eta() * (s - 0.5 * l))
            .collect(),
    )
}

/// `S = Φ/η + ln √ρ`.
pub fn recovered_entropy(s: &FieldState, params: &ModelParams) -> Result<ScalarField> {
    let (l, _) = log_density(&s.rho);
    field(
        s.grid(),
        s.phi
            .values()
            .iter()
            .zip(&l)
            .map(|(p, l)| p / params.eta() + 0.5 * l)
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct VelocityDecomposition {
    pub current: Vec<ScalarField>,
    /// `b^A = η m^{AB} ∂_B S`
    pub drift: Vec<ScalarField>,
    /// `u^A = −η m^{AB} ∂_B ln √ρ`
    pub osmotic: Vec<ScalarField>,
}

impl VelocityDecomposition {
    /// `max |v − b − u|` over axes and nodes.
    pub fn max_mismatch(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ((v, b), u) in self.current.iter().zip(&self.drift).zip(&self.osmotic) {
            for ((v, b), u) in v.values().iter().zip(b.values()).zip(u.values()) {
                worst = worst.max((v - b - u).abs());
            }
        }
        worst
    }
}

/// Current velocity together with its drift and osmotic parts for a given
/// `S`. The parts add up to the current exactly when `Φ` came from
/// [`phase_from_entropy`] with the same `S`.
pub fn decompose_velocity(
    s: &FieldState,
    params: &ModelParams,
    dp: &DriftPotential,
) -> Result<VelocityDecomposition> {
    let g = s.grid();
    let current = current_velocity(s, params)?;
    let sv = dp.on_grid(g)?;
    let drift = (0..g.dim())
        .map(|a| {
            let c = params.eta() / params.axis_mass(a);
            field(g, partial_values(g, &sv, a).into_iter().map(|x| c * x).collect())
        })
        .collect::<Result<_>>()?;
    let osmotic = osmotic_velocity(&s.rho, params)?.u;
    Ok(VelocityDecomposition {
        current,
        drift,
        osmotic,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OsmoticVelocity {
    pub u: Vec<ScalarField>,
    /// `max |ρu + D∂ρ| / max |D∂ρ|`: the Fick-law identity, which holds up to
    /// the truncation error of the difference stencils.
    pub fick_residual: f64,
    pub floor: FloorReport,
}

/// `u = −(η/2m) ∂ ln ρ` on the floored density.
pub fn osmotic_velocity(rho: &DensityField, params: &ModelParams) -> Result<OsmoticVelocity> {
    let g = rho.grid();
    check_axes(g, params)?;
    let (l, floor) = log_density(rho);
    let mut u = Vec::with_capacity(g.dim());
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for a in 0..g.dim() {
        let diff = params.eta() / (2.0 * params.axis_mass(a));
        let ua: Vec<f64> = partial_values(g, &l, a).into_iter().map(|d| -diff * d).collect();
        let drho = partial_values(g, rho.values(), a);
        for ((r, u), d) in rho.values().iter().zip(&ua).zip(&drho) {
            worst = worst.max((r * u + diff * d).abs());
            scale = scale.max((diff * d).abs());
        }
        u.push(field(g, ua)?);
    }
    Ok(OsmoticVelocity {
        u,
        fick_residual: if scale > 0.0 { worst / scale } else { worst },
        floor,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FisherInformation {
    /// `I_AB = ∫ ∂_Aρ ∂_Bρ / ρ`
    pub matrix: DMatrix<f64>,
    /// `m^{AB} I_AB`
    pub trace: f64,
    pub floor: FloorReport,
}

/// Fisher information of the translation family of `ρ`, evaluated as
/// `∫ ρ ∂_A ln ρ ∂_B ln ρ` with the floored `ln ρ`.
pub fn fisher_functional(rho: &DensityField, params: &ModelParams) -> Result<FisherInformation> {
    let g = rho.grid();
    check_axes(g, params)?;
    let (l, floor) = log_density(rho);
    let grads: Vec<Vec<f64>> = (0..g.dim()).map(|a| partial_values(g, &l, a)).collect();
    let n = g.dim();
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let integrand: Vec<f64> = rho
                .values()
                .iter()
                .zip(&grads[a])
                .zip(&grads[b])
                .map(|((r, x), y)| r * x * y)
                .collect();
            let v = ops::integrate_values(g, &integrand);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    let trace = (0..n).map(|a| m[(a, a)] / params.axis_mass(a)).sum();
    Ok(FisherInformation {
        matrix: m,
        trace,
        floor,
    })
}

/// `∂²_A √ρ / √ρ = ½ ∂²_A ℓ + ¼ (∂_A ℓ)²` summed with weights `1/m_A`.
fn laplacian_sqrt_ratio(g: &Grid, l: &[f64], params: &ModelParams, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for a in 0..g.dim() {
        let inv_m = 1.0 / params.axis_mass(a);
        let d1 = partial_values(g, l, a);
        let d2 = second_partial_values(g, l, a);
        for ((o, d1), d2) in out.iter_mut().zip(&d1).zip(&d2) {
            *o += inv_m * (0.5 * d2 + 0.25 * d1 * d1);
        }
    }
}

/// `Q = −4ξ m^{AB} ∂_A∂_B√ρ / √ρ`.
pub fn quantum_potential(rho: &DensityField, params: &ModelParams) -> Result<ScalarField> {
    let g = rho.grid();
    check_axes(g, params)?;
    let (l, _) = log_density(rho);
    let mut r = vec![0.0; l.len()];
    laplacian_sqrt_ratio(g, &l, params, &mut r);
    field(g, r.into_iter().map(|x| -4.0 * params.xi() * x).collect())
}

/// `H̃ = ∫ ½ρ m^{AB}∂_AΦ∂_BΦ + ξ m^{AB} I_AB + ∫ ρV`.
pub fn ensemble_hamiltonian(s: &FieldState, params: &ModelParams, v: &Potential) -> Result<f64> {
    let g = s.grid();
    check_axes(g, params)?;
    let vv = v.on_grid(g)?;
    let mut density = vec![0.0; g.len()];
    for a in 0..g.dim() {
        let inv_m = 1.0 / params.axis_mass(a);
        let d = partial_values(g, s.phi.values(), a);
        for (o, d) in density.iter_mut().zip(&d) {
            *o += 0.5 * inv_m * d * d;
        }
    }
    for ((o, r), v) in density.iter_mut().zip(s.rho.values()).zip(&vv) {
        *o = r * (*o + v);
    }
    let fisher = fisher_functional(&s.rho, params)?;
    Ok(ops::integrate_values(g, &density) + params.xi() * fisher.trace)
}

/// Largest stable `dt_solver` for the grid, `0.2 m h² / ħ`; unbounded when
/// `ξ = 0`.
pub fn stability_bound(grid: &Grid, params: &ModelParams) -> f64 {
    match params.hbar() {
        Some(hbar) => {
            let m = params.masses().iter().copied().fold(f64::INFINITY, f64::min);
            let h = grid.min_spacing();
            STABILITY_FACTOR * m * h * h / hbar
        }
        None => f64::INFINITY,
    }
}

/// Explicit fourth-order Runge–Kutta integrator for `(ln ρ, Φ)`.
#[derive(Clone, Debug)]
pub struct CoupledStepper {
    grid: Arc<Grid>,
    // same nodes with one-sided end stencils, used while a periodic seam
    // lies in the continued tails
    open: Arc<Grid>,
    params: ModelParams,
    potential: Vec<f64>,
    log_rho: Vec<f64>,
    phi: Vec<f64>,
    dt: f64,
    time: f64,
    steps: u64,
}

impl CoupledStepper {
    pub fn new(s: &FieldState, params: &ModelParams, v: &Potential, dt: f64) -> Result<Self> {
        let log_rho = s
            .rho
            .values()
            .iter()
            .map(|r| r.max(LOG_FLOOR).ln())
            .collect();
        Self::from_log_density(
            s.grid().clone(),
            log_rho,
            s.phi.values().to_vec(),
            s.time,
            params,
            v,
            dt,
        )
    }

    /// Starts from `ln ρ` directly (e.g. an analytic Gaussian), so tails far
    /// below the smallest representable density are kept.
    pub fn from_log_density(
        grid: Arc<Grid>,
        mut log_rho: Vec<f64>,
        phi: Vec<f64>,
        time: f64,
        params: &ModelParams,
        v: &Potential,
        dt: f64,
    ) -> Result<Self> {
        check_axes(&grid, params)?;
        if log_rho.len() != grid.len() || phi.len() != grid.len() {
            return Err(argument("state does not match the grid"));
        }
        if log_rho.iter().chain(&phi).any(|x| !x.is_finite()) {
            return Err(argument("state has non-finite values"));
        }
        let bound = stability_bound(&grid, params);
        if !(dt > 0.0 && dt <= bound) {
            return Err(argument(format!(
                "dt_solver {dt} exceeds the stability bound {bound:.6e}"
            )));
        }
        let potential = v.on_grid(&grid)?;
        let mut phi = phi;
        continue_tails(&grid, &mut log_rho, &mut phi);
        let z = log_mass(&grid, &log_rho);
        log_rho.iter_mut().for_each(|l| *l -= z);
        Ok(Self {
            open: Arc::new(grid.with_boundary(Boundary::Reflecting)),
            grid,
            params: params.clone(),
            potential,
            log_rho,
            phi,
            dt,
            time,
            steps: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn log_density(&self) -> &[f64] {
        &self.log_rho
    }

    pub fn state(&self) -> Result<FieldState> {
        let rho: Vec<f64> = self.log_rho.iter().map(|l| l.exp()).collect();
        let rho = DensityField::from_normalized(field(&self.grid, rho)?)?;
        FieldState::new(rho, field(&self.grid, self.phi.clone())?, self.time)
    }

    fn rhs(&self, g: &Grid, l: &[f64], phi: &[f64], dl: &mut [f64], dphi: &mut [f64]) {
        dl.iter_mut().for_each(|x| *x = 0.0);
        for (dp, v) in dphi.iter_mut().zip(&self.potential) {
            *dp = -v;
        }
        let four_xi = 4.0 * self.params.xi();
        for a in 0..g.dim() {
            let inv_m = 1.0 / self.params.axis_mass(a);
            let l1 = partial_values(g, l, a);
            let l2 = second_partial_values(g, l, a);
            let p1 = partial_values(g, phi, a);
            let p2 = second_partial_values(g, phi, a);
            for i in 0..l.len() {
                dl[i] -= inv_m * (p1[i] * l1[i] + p2[i]);
                dphi[i] += inv_m
                    * (-0.5 * p1[i] * p1[i] + four_xi * (0.5 * l2[i] + 0.25 * l1[i] * l1[i]));
            }
        }
    }

    /// One RK4 step followed by renormalisation.
    pub fn step(&mut self) -> Result<()> {
        let n = self.log_rho.len();
        let dt = self.dt;
        let (l0, p0) = (&self.log_rho, &self.phi);
        // a displaced packet or a phase slope is not periodic; once the seam
        // carries no density, differentiating across it only injects the jump
        let g = if seam_in_tail(&self.grid, l0) { self.open.clone() } else { self.grid.clone() };
        let mut kl = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut kp = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut lt = vec![0.0; n];
        let mut pt = vec![0.0; n];
        for stage in 0..4 {
            let c = match stage {
                0 => 0.0,
                3 => dt,
                _ => 0.5 * dt,
            };
            if stage == 0 {
                lt.copy_from_slice(l0);
                pt.copy_from_slice(p0);
            } else {
                for i in 0..n {
                    lt[i] = l0[i] + c * kl[stage - 1][i];
                    pt[i] = p0[i] + c * kp[stage - 1][i];
                }
            }
            let (a, b) = (&mut kl[stage], &mut kp[stage]);
            self.rhs(&g, &lt, &pt, a, b);
        }
        let mut l_new = vec![0.0; n];
        let mut p_new = vec![0.0; n];
        for i in 0..n {
            l_new[i] = l0[i] + dt / 6.0 * (kl[0][i] + 2.0 * kl[1][i] + 2.0 * kl[2][i] + kl[3][i]);
            p_new[i] = p0[i] + dt / 6.0 * (kp[0][i] + 2.0 * kp[1][i] + 2.0 * kp[2][i] + kp[3][i]);
        }
        if let Some(i) = l_new.iter().chain(&p_new).position(|x| !x.is_finite()) {
            return Err(self.failure(format!("non-finite value at node {}", i % n)));
        }
        continue_tails(&self.grid, &mut l_new, &mut p_new);
        let w = sponge_weights(&l_new);
        sponge(&g, &w, &mut l_new);
        sponge(&g, &w, &mut p_new);
        filter(&g, &mut l_new);
        filter(&g, &mut p_new);
        let z = log_mass(&self.grid, &l_new);
        let drift = z.exp_m1().abs();
        if !(drift < MASS_DRIFT_TOL) {
            return Err(self.failure(format!("normalisation drifted by {drift:.3e}")));
        }
        l_new.iter_mut().for_each(|l| *l -= z);
        self.log_rho = l_new;
        self.phi = p_new;
        self.steps += 1;
        self.time += dt;
        Ok(())
    }

    fn failure(&self, reason: String) -> Error {
        Error::Numerical {
            engine: "fields",
            step: self.steps,
            reason,
        }
    }

    pub fn advance(&mut self, n_steps: u64) -> Result<()> {
        for _ in 0..n_steps {
            self.step()?;
        }
        Ok(())
    }
}

/// True when every periodic axis has both end nodes of every line below the
/// density floor.
fn seam_in_tail(grid: &Grid, l: &[f64]) -> bool {
    let top = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cut = top + DENSITY_FLOOR.ln();
    let mut any = false;
    for axis in 0..grid.dim() {
        let ax = grid.axis(axis);
        if ax.boundary() != Boundary::Periodic {
            continue;
        }
        any = true;
        let n = ax.n_points();
        let stride = grid.stride(axis);
        for line in 0..grid.len() / n {
            let start = if axis == 0 { line } else { line * n };
            if l[start] >= cut || l[start + (n - 1) * stride] >= cut {
                return false;
            }
        }
    }
    any
}

/// Nodes in the least-squares window that continues a resolved profile.
const TAIL_WINDOW: usize = 24;

/// Replaces `(ℓ, Φ)` below the density floor by the least-squares quadratic
/// through the outermost resolved nodes of each grid line.
///
/// Where `ρ < 10⁻¹² max ρ` the log variables carry no information: any
/// rounding there is amplified by `√(max ρ / ρ)` as it spreads outwards and
/// soon swamps the true tail. Continuing the resolved profile instead is exact
/// for Gaussian tails; fitting over a window rather than interpolating the
/// last three nodes keeps grid-scale noise from being fed back at the edge.
fn continue_tails(grid: &Grid, l: &mut [f64], phi: &mut [f64]) {
    let top = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cut = top + DENSITY_FLOOR.ln();
    for axis in 0..grid.dim() {
        let n = grid.axis(axis).n_points();
        let stride = grid.stride(axis);
        for line in 0..grid.len() / n {
            let start = if axis == 0 { line } else { line * n };
            let idx = |i: usize| start + i * stride;
            let Some(first) = (0..n).find(|&i| l[idx(i)] >= cut) else {
                continue;
            };
            let last = (0..n).rev().find(|&i| l[idx(i)] >= cut).unwrap_or(first);
            let w = TAIL_WINDOW.min(last + 1 - first);
            if w < 3 {
                continue;
            }
            for f in [&mut *l, &mut *phi] {
                // offsets counted outwards from the edge node
                let right: Vec<(f64, f64)> =
                    (0..w).map(|k| (-(k as f64), f[idx(last - k)])).collect();
                if let Some(q) = fit_quadratic(&right) {
                    for i in last + 1..n {
                        f[idx(i)] = eval_quadratic(q, (i - last) as f64);
                    }
                }
                let left: Vec<(f64, f64)> =
                    (0..w).map(|k| (-(k as f64), f[idx(first + k)])).collect();
                if let Some(q) = fit_quadratic(&left) {
                    for i in 0..first {
                        f[idx(i)] = eval_quadratic(q, (first - i) as f64);
                    }
                }
            }
        }
    }
}

/// Depth below `max ℓ` where the sponge starts, and where it is fully on.
const SPONGE_START: f64 = 13.815_510_557_964_274; // ln 10⁶
const SPONGE_FULL: f64 = 27.631_021_115_928_547; // ln 10¹²
const SPONGE_STRENGTH: f64 = 0.5;

/// Ramp from 0 where `ρ = 10⁻⁶ max ρ` to 1 at the density floor.
fn sponge_weights(l: &[f64]) -> Vec<f64> {
    let top = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    l.iter()
        .map(|&v| ((top - v - SPONGE_START) / (SPONGE_FULL - SPONGE_START)).clamp(0.0, 1.0))
        .collect()
}

/// Fourth-order damping `f ← f − σ w δ⁴f / 16` in the low-density band.
///
/// Relative perturbations grow as they run into thinning density, at
/// `(ħ|∂ℓ|/2m)·sin(kh)/h` on the grid. Near `kh = π/2` the discrete group
/// velocity vanishes, so those modes sit at the edge of the resolved region
/// and grow without bound; the eighth-order filter is too weak there once
/// `|∂ℓ|` is large. Cubics pass unchanged and the dense core is untouched.
fn sponge(grid: &Grid, w: &[f64], f: &mut [f64]) {
    const C: [f64; 5] = [1.0, -4.0, 6.0, -4.0, 1.0];
    let scale = SPONGE_STRENGTH / 16.0;
    for axis in 0..grid.dim() {
        let ax = grid.axis(axis);
        let n = ax.n_points();
        if n < 5 {
            continue;
        }
        let periodic = ax.boundary() == Boundary::Periodic;
        let stride = grid.stride(axis);
        let mut line = vec![0.0; n];
        for l in 0..grid.len() / n {
            let start = if axis == 0 { l } else { l * n };
            for i in 0..n {
                line[i] = f[start + i * stride];
            }
            for i in 0..n {
                let k = start + i * stride;
                if w[k] == 0.0 || (!periodic && (i < 2 || i + 2 >= n)) {
                    continue;
                }
                let d: f64 = C.iter().enumerate().map(|(j, c)| c * line[(i + n + j - 2) % n]).sum();
                f[k] = line[i] - scale * w[k] * d;
            }
        }
    }
}

/// Strength of the eighth-order low-pass filter applied after every step.
const FILTER_STRENGTH: f64 = 0.5;

/// `f ← f − σ δ⁸f / 2⁸` along every axis, away from the last four nodes of
/// reflecting ends. Polynomials of degree below eight pass unchanged, so the
/// Gaussian states are exact; the grid-scale modes that centred differences
/// cannot propagate correctly are damped by up to `1 − σ` per step.
fn filter(grid: &Grid, f: &mut [f64]) {
    const C: [f64; 9] = [1.0, -8.0, 28.0, -56.0, 70.0, -56.0, 28.0, -8.0, 1.0];
    let scale = FILTER_STRENGTH / 256.0;
    for axis in 0..grid.dim() {
        let ax = grid.axis(axis);
        let n = ax.n_points();
        if n < 9 {
            continue;
        }
        let periodic = ax.boundary() == Boundary::Periodic;
        let stride = grid.stride(axis);
        let mut line = vec![0.0; n];
        for l in 0..grid.len() / n {
            let start = if axis == 0 { l } else { l * n };
            for i in 0..n {
                line[i] = f[start + i * stride];
            }
            for i in 0..n {
                if !periodic && (i < 4 || i + 4 >= n) {
                    continue;
                }
                let d: f64 = C
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * line[(i + n + k - 4) % n])
                    .sum();
                f[start + i * stride] = line[i] - scale * d;
            }
        }
    }
}

fn fit_quadratic(points: &[(f64, f64)]) -> Option<[f64; 3]> {
    let mut a = nalgebra::Matrix3::zeros();
    let mut b = nalgebra::Vector3::zeros();
    for &(x, y) in points {
        let basis = [1.0, x, x * x];
        for r in 0..3 {
            b[r] += basis[r] * y;
            for c in 0..3 {
                a[(r, c)] += basis[r] * basis[c];
            }
        }
    }
    let q = a.lu().solve(&b)?;
    Some([q[0], q[1], q[2]])
}

fn eval_quadratic(q: [f64; 3], x: f64) -> f64 {
    q[0] + x * (q[1] + x * q[2])
}

/// `ln ∫ e^ℓ`, factoring out the maximum so tails cannot overflow.
fn log_mass(grid: &Grid, l: &[f64]) -> f64 {
    let top = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = l.iter().map(|x| (x - top).exp()).collect();
    top + ops::integrate_values(grid, &shifted).ln()
}

/// One step of the coupled system.
pub fn step_coupled(
    s: &FieldState,
    params: &ModelParams,
    v: &Potential,
    dt_solver: f64,
) -> Result<FieldState> {
    let mut st = CoupledStepper::new(s, params, v, dt_solver)?;
    st.step()?;
    st.state()
}

/// `max_t |H̃(t) − H̃(0)| / max(|H̃(0)|, 1e−12)` over a trajectory.
pub fn energy_drift(trajectory: &[FieldState], params: &ModelParams, v: &Potential) -> Result<f64> {
    if trajectory.len() < 2 {
        return Err(argument("energy drift needs at least two states"));
    }
    let h0 = ensemble_hamiltonian(&trajectory[0], params, v)?;
    let mut worst: f64 = 0.0;
    for s in &trajectory[1..] {
        worst = worst.max((ensemble_hamiltonian(s, params, v)? - h0).abs());
    }
    Ok(worst / h0.abs().max(1e-12))
}
