//! Maximum-entropy transition kernels and the information geometry they induce.
//!
//! A short step `x → x'` is inferred by maximising entropy relative to a
//! Gaussian prior of precision `α_n` per particle, subject to the drift
//! potential `S(x)` (the entropy of the unobserved variables). The result is
//!
//! ```text
//! P(x'|x) = exp[S(x') − Σ_A (α_A/2)(x'^A − x^A)²] / ζ(x)
//! ```
//!
//! which for large `α` is a Gaussian with mean shift `∂_A S / α_A` and
//! variance `1/α_A`. With `α_n = m_n/(η Δt)` this is the Wiener step
//! `Δx = b Δt + Δw` with drift `b^A = η m^{AB} ∂_B S`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, Error, Result};
use crate::numerics::{ops, Axis, Boundary, DensityField, Grid, ScalarField};

/// Model constants shared by every engine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    masses: Vec<f64>,
    eta: f64,
    xi: f64,
    dt: f64,
    dim: usize,
}

impl ModelParams {
    /// `masses` has one entry per particle; each particle lives in `dim` coordinates.
    pub fn new(masses: Vec<f64>, eta: f64, xi: f64, dt: f64, dim: usize) -> Result<Self> {
        if masses.is_empty() {
            return Err(argument("at least one particle is required"));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(argument(format!("masses must be positive, got {m}")));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(argument(format!("eta must be positive, got {eta}")));
        }
        if !(xi.is_finite() && xi >= 0.0) {
            return Err(argument(format!(
                "xi must be nonnegative (negative values are unstable), got {xi}"
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(argument(format!("dt must be positive, got {dt}")));
        }
        if !(1..=2).contains(&dim) {
            return Err(argument(format!("particle dimension must be 1 or 2, got {dim}")));
        }
        let p = Self {
            masses,
            eta,
            xi,
            dt,
            dim,
        };
        if let Some(a) = p.alphas().into_iter().find(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(argument(format!("derived multiplier {a} is not finite and positive")));
        }
        Ok(p)
    }

    /// One particle in one dimension.
    pub fn single(mass: f64, eta: f64, xi: f64, dt: f64) -> Result<Self> {
        Self::new(vec![mass], eta, xi, dt, 1)
    }

    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        Self::new(self.masses.clone(), self.eta, self.xi, dt, self.dim)
    }

    pub fn with_xi(&self, xi: f64) -> Result<Self> {
        Self::new(self.masses.clone(), self.eta, xi, self.dt, self.dim)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_particles(&self) -> usize {
        self.masses.len()
    }

    /// Total number of configuration coordinates `N·d`.
    pub fn coordinate_count(&self) -> usize {
        self.masses.len() * self.dim
    }

    /// Mass of the particle owning coordinate `a`.
    pub fn axis_mass(&self, a: usize) -> f64 {
        self.masses[a / self.dim]
    }

    /// Diagonal of the inverse mass tensor `m^{AB}`, one entry per coordinate.
    pub fn inverse_masses(&self) -> Vec<f64> {
        (0..self.coordinate_count())
            .map(|a| 1.0 / self.axis_mass(a))
            .collect()
    }

    /// `α_n = m_n/(η Δt)` per particle.
    pub fn alphas(&self) -> Vec<f64> {
        self.masses
            .iter()
            .map(|m| m / (self.eta * self.dt))
            .collect()
    }

    /// Diffusion tensor diagonal `D^{AA} = η/(2 m)`, per coordinate.
    pub fn diffusion(&self) -> Vec<f64> {
        (0..self.coordinate_count())
            .map(|a| self.eta / (2.0 * self.axis_mass(a)))
            .collect()
    }

    /// `ħ = (8ξ)^{1/2}`, or `None` for the classical hybrid `ξ = 0`.
    pub fn hbar(&self) -> Option<f64> {
        (self.xi > 0.0).then(|| (8.0 * self.xi).sqrt())
    }
}

/// `α_n = m_n/(η Δt)` for each particle.
pub fn multipliers_from_timescale(params: &ModelParams) -> Vec<f64> {
    params.alphas()
}

/// Precision that gives an isotropic `d`-dimensional Gaussian step the
/// expected squared length `kappa`: `α = d/κ`.
pub fn multiplier_from_step_constraint(kappa: f64, d: usize) -> Result<f64> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(domain(format!("step constraint must be positive, got {kappa}")));
    }
    if !(1..=3).contains(&d) {
        return Err(argument(format!("spatial dimension must be 1, 2 or 3, got {d}")));
    }
    Ok(d as f64 / kappa)
}

/// Lagrange multipliers of the step constraint, one per configuration coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipliers(Vec<f64>);

impl Multipliers {
    pub fn new(per_axis: Vec<f64>) -> Result<Self> {
        if per_axis.is_empty() || per_axis.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(argument("multipliers must be finite and positive"));
        }
        Ok(Self(per_axis))
    }

    pub fn uniform(alpha: f64, n_axes: usize) -> Result<Self> {
        Self::new(vec![alpha; n_axes])
    }

    pub fn from_params(params: &ModelParams) -> Self {
        let alphas = params.alphas();
        Self(
            (0..params.coordinate_count())
                .map(|a| alphas[a / params.dim()])
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Entropy `S(x)` of the unobserved variables, the source of the drift.
#[derive(Clone, Debug, PartialEq)]
pub enum DriftPotential {
    /// `S(x) = Σ_A Σ_k c_k (x^A)^k`, the same polynomial on every coordinate.
    Polynomial(Vec<f64>),
    /// Values on a grid, multilinearly interpolated.
    Tabulated(TabulatedEntropy),
    /// `p(y|x)` normal with `ln σ_y(x) = Σ_A Σ_k c_k (x^A)^k` and a uniform
    /// measure, so `S(x) = ½ ln(2πe σ_y(x)²)`.
    GaussianFamily { log_sigma: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedEntropy {
    values: ScalarField,
    gradient: Vec<ScalarField>,
}

impl TabulatedEntropy {
    pub fn values(&self) -> &ScalarField {
        &self.values
    }
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
}

fn poly_deriv(c: &[f64], x: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, &ck)| acc * x + k as f64 * ck)
}

impl DriftPotential {
    /// `S = 0`: no drift, pure diffusion.
    pub fn constant() -> Self {
        Self::Polynomial(Vec::new())
    }

    /// `S(x) = c·x` on every coordinate.
    pub fn linear(c: f64) -> Self {
        Self::Polynomial(vec![0.0, c])
    }

    pub fn tabulated(values: ScalarField) -> Result<Self> {
        let gradient = ops::gradient(&values)?;
        Ok(Self::Tabulated(TabulatedEntropy { values, gradient }))
    }

    pub fn entropy(&self, x: &[f64]) -> Result<f64> {
        match self {
            Self::Polynomial(c) => Ok(x.iter().map(|&v| poly_eval(c, v)).sum()),
            Self::GaussianFamily { log_sigma } => {
                let ln_sigma: f64 = x.iter().map(|&v| poly_eval(log_sigma, v)).sum();
                Ok(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + ln_sigma)
            }
            Self::Tabulated(t) => t
                .values
                .sample(x)
                .ok_or_else(|| domain(format!("drift potential not tabulated at {x:?}"))),
        }
    }

    /// Writes `∂_A S(x)` into `out`.
    pub fn entropy_gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Self::Polynomial(c) => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = poly_deriv(c, v);
                }
            }
            Self::GaussianFamily { log_sigma } => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = poly_deriv(log_sigma, v);
                }
            }
            Self::Tabulated(t) => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = t.gradient.get(k).and_then(|g| g.sample(x)).ok_or_else(|| {
                        domain(format!("drift potential not tabulated at {x:?}"))
                    })?;
                }
            }
        }
        Ok(())
    }

    /// `S` sampled on every node of `grid`.
    pub fn on_grid(&self, grid: &Grid) -> Result<Vec<f64>> {
        let mut p = vec![0.0; grid.dim()];
        (0..grid.len())
            .map(|i| {
                grid.point_into(i, &mut p);
                self.entropy(&p)
            })
            .collect()
    }
}

/// `S(x)` for the given drift potential.
pub fn drift_entropy(dp: &DriftPotential, x: &[f64]) -> Result<f64> {
    dp.entropy(x)
}

/// Largest tolerated probability mass beyond the edge of a reflecting grid.
pub const TAIL_MASS_TOL: f64 = 1e-10;

fn check_dims(x: &[f64], alphas: &Multipliers, grid: &Grid) -> Result<()> {
    if x.len() != grid.dim() || alphas.len() != grid.dim() {
        return Err(argument(format!(
            "position has {} coordinates, multipliers {}, grid {} axes",
            x.len(),
            alphas.len(),
            grid.dim()
        )));
    }
    Ok(())
}

/// `ln[w_i exp(S_i − Σ α/2 d²)]` at every node, unnormalised.
fn log_kernel_masses(
    x: &[f64],
    s_grid: &[f64],
    alphas: &Multipliers,
    grid: &Grid,
) -> Vec<f64> {
    let mut p = vec![0.0; grid.dim()];
    (0..grid.len())
        .map(|i| {
            grid.point_into(i, &mut p);
            let quad: f64 = grid
                .axes()
                .iter()
                .zip(alphas.as_slice())
                .zip(x.iter().zip(&p))
                .map(|((ax, a), (&from, &to))| {
                    let d = ax.displacement(from, to);
                    0.5 * a * d * d
                })
                .sum();
            grid.weight(i).ln() + s_grid[i] - quad
        })
        .collect()
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Estimated mass lost past reflecting edges: face mass times the kernel width.
fn truncated_tail_mass(density: &[f64], alphas: &Multipliers, grid: &Grid) -> f64 {
    let mut tail = 0.0;
    for (k, ax) in grid.axes().iter().enumerate() {
        if ax.boundary() == Boundary::Periodic {
            continue;
        }
        let n = ax.n_points();
        let sigma = 1.0 / alphas.as_slice()[k].sqrt();
        for (i, &r) in density.iter().enumerate() {
            let idx = grid.unflatten(i)[k];
            if idx == 0 || idx + 1 == n {
                let face_weight = grid.weight(i) / ax.weight(idx);
                tail += r * face_weight * sigma;
            }
        }
    }
    tail
}

/// Normalised maximum-entropy transition density `P(x'|x)` over `x'` on `grid`.
pub fn transition_density(
    x: &[f64],
    dp: &DriftPotential,
    alphas: &Multipliers,
    grid: &Arc<Grid>,
) -> Result<DensityField> {
    check_dims(x, alphas, grid)?;
    let s = dp.on_grid(grid)?;
    transition_density_with(x, &s, alphas, grid)
}

fn transition_density_with(
    x: &[f64],
    s_grid: &[f64],
    alphas: &Multipliers,
    grid: &Arc<Grid>,
) -> Result<DensityField> {
    let log_m = log_kernel_masses(x, s_grid, alphas, grid);
    let z = log_sum_exp(&log_m);
    let values: Vec<f64> = log_m
        .iter()
        .enumerate()
        .map(|(i, &l)| (l - z).exp() / grid.weight(i))
        .collect();
    let tail = truncated_tail_mass(&values, alphas, grid);
    if tail > TAIL_MASS_TOL {
        return Err(Error::Precision(format!(
            "grid truncates the kernel: estimated tail mass {tail:.3e}"
        )));
    }
    let field = ScalarField::new(grid.clone(), values)?;
    // renormalise against the grid's own quadrature so the integral is exact
    ops::normalize(&field)
}

/// Mean and variance of a short max-ent step, in the Gaussian regime.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMoments {
    pub mean_shift: Vec<f64>,
    pub covariance_diag: Vec<f64>,
}

/// `⟨Δx^A⟩ = ∂_A S/α_A` and `⟨(Δx^A)²⟩_c = 1/α_A` at `x`.
pub fn transition_moments(
    x: &[f64],
    dp: &DriftPotential,
    params: &ModelParams,
) -> Result<TransitionMoments> {
    if x.len() != params.coordinate_count() {
        return Err(argument(format!(
            "expected {} coordinates, got {}",
            params.coordinate_count(),
            x.len()
        )));
    }
    let alphas = Multipliers::from_params(params);
    let mut grad = vec![0.0; x.len()];
    dp.entropy_gradient(x, &mut grad)?;
    Ok(TransitionMoments {
        mean_shift: grad
            .iter()
            .zip(alphas.as_slice())
            .map(|(g, a)| g / a)
            .collect(),
        covariance_diag: alphas.as_slice().iter().map(|a| 1.0 / a).collect(),
    })
}

/// Damping of the multiplicative ascent.
pub const ASCENT_DAMPING: f64 = 0.5;
/// Iteration cap of the multiplicative ascent.
pub const ASCENT_MAX_ITER: usize = 10_000;

/// Discretised relative-entropy objective `−Σ P ln(P/Q) + Σ P S` over masses `P`.
pub fn entropy_objective(masses: &[f64], prior_masses: &[f64], s: &[f64]) -> f64 {
    masses
        .iter()
        .zip(prior_masses)
        .zip(s)
        .map(|((&p, &q), &sv)| if p > 0.0 { -p * (p / q).ln() + p * sv } else { 0.0 })
        .sum()
}

/// Outcome of the numerical entropy maximisation on a grid.
#[derive(Clone, Debug)]
pub struct VariationalSolution {
    /// Node masses of the maximiser (sum to one).
    pub masses: Vec<f64>,
    pub prior_masses: Vec<f64>,
    pub entropy: Vec<f64>,
    pub iterations: usize,
}

/// Maximises the discretised objective by damped exponentiated-gradient ascent,
/// starting from uniform masses.
pub fn maximize_entropy(
    x: &[f64],
    dp: &DriftPotential,
    alphas: &Multipliers,
    grid: &Arc<Grid>,
) -> Result<VariationalSolution> {
    check_dims(x, alphas, grid)?;
    let s = dp.on_grid(grid)?;
    let s_zero = vec![0.0; s.len()];
    // prior masses: quadrature weight times the Gaussian prior
    let log_q = log_kernel_masses(x, &s_zero, alphas, grid);
    let n = grid.len();
    let mut log_p = vec![-(n as f64).ln(); n];
    let mut next = vec![0.0; n];
    for iter in 1..=ASCENT_MAX_ITER {
        for i in 0..n {
            let grad = -(log_p[i] - log_q[i]) - 1.0 + s[i];
            next[i] = log_p[i] + ASCENT_DAMPING * grad;
        }
        let z = log_sum_exp(&next);
        let mut change: f64 = 0.0;
        for i in 0..n {
            let v = next[i] - z;
            change = change.max((v - log_p[i]).abs());
            log_p[i] = v;
        }
        if change < 1e-13 {
            return Ok(VariationalSolution {
                masses: log_p.iter().map(|l| l.exp()).collect(),
                prior_masses: log_q.iter().map(|l| l.exp()).collect(),
                entropy: s,
                iterations: iter,
            });
        }
        if iter == ASCENT_MAX_ITER {
            return Err(Error::Convergence {
                iterations: iter,
                gap: change,
            });
        }
    }
    unreachable!()
}

/// Total-variation distance between the numerical maximiser of the discretised
/// objective and the closed-form kernel.
pub fn variational_gap(
    x: &[f64],
    dp: &DriftPotential,
    alphas: &Multipliers,
    grid: &Arc<Grid>,
) -> Result<f64> {
    let sol = maximize_entropy(x, dp, alphas, grid)?;
    let closed = transition_density_with(x, &sol.entropy, alphas, grid)?;
    Ok(0.5
        * sol
            .masses
            .iter()
            .zip(closed.values())
            .enumerate()
            .map(|(i, (p, c))| (p - c * grid.weight(i)).abs())
            .sum::<f64>())
}

/// Information metric of the kernel family and the mass tensor it defines.
#[derive(Clone, Debug)]
pub struct InformationMetric {
    pub gamma: DMatrix<f64>,
    pub mass_tensor: DMatrix<f64>,
}

const METRIC_HALF_WIDTH: f64 = 12.0;
const METRIC_POINTS: usize = 193;

/// `γ_AB = C ∫ dx' P(x'|x) ∂_A ln P ∂_B ln P`, by quadrature in `x'` and
/// central differences in `x`; `m_AB = (η Δt / C) γ_AB`.
pub fn information_metric(
    params: &ModelParams,
    dp: &DriftPotential,
    x: &[f64],
    c: f64,
) -> Result<InformationMetric> {
    let n = params.coordinate_count();
    if x.len() != n {
        return Err(argument(format!("expected {n} coordinates, got {}", x.len())));
    }
    if n > 2 {
        return Err(argument("information metric quadrature supports at most 2 coordinates"));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(argument(format!("scale constant must be positive, got {c}")));
    }
    let alphas = Multipliers::from_params(params);
    let mut grad = vec![0.0; n];
    dp.entropy_gradient(x, &mut grad)?;
    let sigmas: Vec<f64> = alphas.as_slice().iter().map(|a| 1.0 / a.sqrt()).collect();
    let axes = (0..n)
        .map(|k| {
            let centre = x[k] + grad[k] / alphas.as_slice()[k];
            let half = METRIC_HALF_WIDTH * sigmas[k];
            Axis::new(METRIC_POINTS, centre - half, centre + half, Boundary::Reflecting)
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = Arc::new(Grid::from_axes(axes)?);
    let s = dp.on_grid(&grid)?;

    let log_density = |y: &[f64]| -> Result<Vec<f64>> {
        let log_m = log_kernel_masses(y, &s, &alphas, &grid);
        let z = log_sum_exp(&log_m);
        Ok(log_m
            .iter()
            .enumerate()
            .map(|(i, l)| l - z - grid.weight(i).ln())
            .collect())
    };

    let base = transition_density_with(x, &s, &alphas, &grid)?;
    let mut scores = Vec::with_capacity(n);
    for b in 0..n {
        let eps = 1e-4 * sigmas[b];
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[b] += eps;
        minus[b] -= eps;
        let lp = log_density(&plus)?;
        let lm = log_density(&minus)?;
        scores.push(
            lp.iter()
                .zip(&lm)
                .map(|(a, b)| (a - b) / (2.0 * eps))
                .collect::<Vec<f64>>(),
        );
    }
    let mut gamma = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let integrand: Vec<f64> = base
                .values()
                .iter()
                .zip(scores[a].iter().zip(&scores[b]))
                .map(|(p, (sa, sb))| p * sa * sb)
                .collect();
            let v = c * ops::integrate_values(&grid, &integrand);
            gamma[(a, b)] = v;
            gamma[(b, a)] = v;
        }
    }
    let mass_tensor = &gamma * (params.eta() * params.dt() / c);
    Ok(InformationMetric { gamma, mass_tensor })
}
