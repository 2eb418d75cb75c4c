//! Walker ensembles moved by the entropic Wiener step, density estimation, and
//! the Bayes-reversed kernel used to expose the arrow of entropic time.

use std::sync::Arc;

use rand::RngExt;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{argument, domain, Error, Result};
use crate::numerics::{ops, Boundary, DensityField, Grid, ScalarField};
use crate::rng;
use crate::statmodel::{log_sum_exp, DriftPotential, ModelParams, Multipliers};

/// Relative density floor applied before Bayes reversal.
pub const REVERSE_DENSITY_FLOOR: f64 = 1e-12;

/// Kernel truncation radius of the density estimate, in bandwidths.
const KDE_RADIUS: f64 = 8.0;

/// Independent walkers in configuration space.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    positions: Vec<f64>,
    n_coords: usize,
    time: f64,
    seed: u64,
    step_count: u64,
    domain: Option<Arc<Grid>>,
}

impl Ensemble {
    /// `positions` holds `W × n_coords` values, walker-major.
    pub fn new(positions: Vec<f64>, n_coords: usize, seed: u64) -> Result<Self> {
        if n_coords == 0 {
            return Err(argument("walkers need at least one coordinate"));
        }
        if positions.is_empty() || !positions.len().is_multiple_of(n_coords) {
            return Err(argument(format!(
                "{} position values do not form whole walkers of {n_coords} coordinates",
                positions.len()
            )));
        }
        if let Some(i) = positions.iter().position(|v| !v.is_finite()) {
            return Err(domain(format!("walker {} has a non-finite position", i / n_coords)));
        }
        Ok(Self {
            positions,
            n_coords,
            time: 0.0,
            seed,
            step_count: 0,
            domain: None,
        })
    }

    /// `walkers` copies of the point `x`.
    pub fn at_point(x: &[f64], walkers: usize, seed: u64) -> Result<Self> {
        let positions = x.iter().copied().cycle().take(x.len() * walkers).collect();
        Self::new(positions, x.len(), seed)
    }

    /// Walkers drawn from independent normals per coordinate.
    pub fn sample_gaussian(mean: &[f64], sigma: &[f64], walkers: usize, seed: u64) -> Result<Self> {
        if mean.len() != sigma.len() || sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(argument("mean and sigma must match and sigma be nonnegative"));
        }
        let n = mean.len();
        let mut positions = vec![0.0; walkers * n];
        for (w, pos) in positions.chunks_mut(n.max(1)).enumerate() {
            let mut r = rng::stream(seed, w as u64, rng::INIT_STEP);
            for k in 0..n {
                let z: f64 = r.sample(StandardNormal);
                pos[k] = mean[k] + sigma[k] * z;
            }
        }
        Self::new(positions, n, seed)
    }

    /// Walkers drawn from a tabulated 1D density by inverting its
    /// piecewise-linear cumulative distribution.
    pub fn sample_density(rho: &DensityField, walkers: usize, seed: u64) -> Result<Self> {
        let grid = rho.grid();
        if grid.dim() != 1 {
            return Err(argument("density sampling is implemented for 1D grids"));
        }
        let ax = grid.axis(0);
        let v = rho.values();
        let n = v.len();
        // cell masses between consecutive nodes (trapezoid)
        let cells = match ax.boundary() {
            Boundary::Reflecting => n - 1,
            Boundary::Periodic => n,
        };
        let h = ax.spacing();
        let mut cdf = Vec::with_capacity(cells + 1);
        cdf.push(0.0);
        for c in 0..cells {
            let (a, b) = (v[c], v[(c + 1) % n]);
            cdf.push(cdf[c] + 0.5 * h * (a + b));
        }
        let total = cdf[cells];
        let mut positions = Vec::with_capacity(walkers);
        for w in 0..walkers {
            let mut r = rng::stream(seed, w as u64, rng::INIT_STEP);
            let u: f64 = r.random::<f64>() * total;
            let c = cdf.partition_point(|&m| m <= u).clamp(1, cells) - 1;
            let (a, b) = (v[c], v[(c + 1) % n]);
            let target = u - cdf[c];
            // solve a·t·h + (b−a)·t²·h/2 = target for t in [0, 1]
            let t = if (b - a).abs() < 1e-300 * (a + b).max(1e-300) || (b - a).abs() < 1e-14 * a.max(b) {
                if a > 0.0 {
                    target / (a * h)
                } else {
                    0.5
                }
            } else {
                let qa = 0.5 * (b - a) * h;
                let qb = a * h;
                let disc = (qb * qb + 4.0 * qa * target).max(0.0);
                2.0 * target / (qb + disc.sqrt())
            };
            positions.push(ax.fold(ax.coord(c) + t.clamp(0.0, 1.0) * h));
        }
        Self::new(positions, 1, seed)?.with_domain(grid.clone())
    }

    /// Confines the walkers to `grid`'s domain (mirror or wrap at the edges).
    pub fn with_domain(mut self, grid: Arc<Grid>) -> Result<Self> {
        if grid.dim() != self.n_coords {
            return Err(argument(format!(
                "domain has {} axes, walkers have {} coordinates",
                grid.dim(),
                self.n_coords
            )));
        }
        for (w, pos) in self.positions.chunks_mut(self.n_coords).enumerate() {
            for (k, x) in pos.iter_mut().enumerate() {
                let ax = grid.axis(k);
                if !ax.contains(*x) {
                    return Err(domain(format!("walker {w} starts outside the domain")));
                }
                *x = ax.fold(*x);
            }
        }
        self.domain = Some(grid);
        Ok(self)
    }

    pub fn walkers(&self) -> usize {
        self.positions.len() / self.n_coords
    }

    pub fn n_coords(&self) -> usize {
        self.n_coords
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn walker(&self, w: usize) -> &[f64] {
        &self.positions[w * self.n_coords..(w + 1) * self.n_coords]
    }

    pub fn coordinate(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.positions.iter().skip(k).step_by(self.n_coords).copied()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn domain(&self) -> Option<&Arc<Grid>> {
        self.domain.as_ref()
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.coordinate(k).sum::<f64>() / self.walkers() as f64
    }

    /// Sample variance (divisor `W − 1`) of coordinate `k`.
    pub fn variance(&self, k: usize) -> f64 {
        let w = self.walkers();
        if w < 2 {
            return 0.0;
        }
        let m = self.mean(k);
        self.coordinate(k).map(|x| (x - m) * (x - m)).sum::<f64>() / (w - 1) as f64
    }

    /// One entropic step: `Δx^A = η/m_A ∂_A S Δt + Δw^A` with
    /// `⟨Δw^A Δw^A⟩ = η Δt / m_A`.
    pub fn advance(&mut self, params: &ModelParams, dp: &DriftPotential) -> Result<()> {
        let n = self.n_coords;
        if n != params.coordinate_count() {
            return Err(argument(format!(
                "walkers have {n} coordinates, the model {}",
                params.coordinate_count()
            )));
        }
        let dt = params.dt();
        let drift_scale: Vec<f64> = (0..n).map(|a| params.eta() / params.axis_mass(a)).collect();
        let noise: Vec<f64> = drift_scale.iter().map(|d| (d * dt).sqrt()).collect();
        let (seed, step) = (self.seed, self.step_count);
        let domain = self.domain.clone();

        let failure = self
            .positions
            .par_chunks_mut(n)
            .enumerate()
            .filter_map(|(w, pos)| {
                let mut grad = [0.0; 4];
                let grad = &mut grad[..n];
                if let Err(e) = dp.entropy_gradient(pos, grad) {
                    return Some((w, e.to_string()));
                }
                if grad.iter().any(|g| !g.is_finite()) {
                    return Some((w, "non-finite drift".to_string()));
                }
                let mut r = rng::stream(seed, w as u64, step);
                for a in 0..n {
                    let z: f64 = r.sample(StandardNormal);
                    let mut x = pos[a] + drift_scale[a] * grad[a] * dt + noise[a] * z;
                    if let Some(g) = &domain {
                        x = g.axis(a).fold(x);
                    }
                    pos[a] = x;
                }
                None
            })
            .min_by_key(|(w, _)| *w);
        if let Some((w, reason)) = failure {
            return Err(Error::Numerical {
                engine: "ensemble",
                step,
                reason: format!("walker {w}: {reason}"),
            });
        }
        self.step_count += 1;
        self.time += dt;
        Ok(())
    }
}

/// One step of every walker; see [`Ensemble::advance`].
pub fn step(e: &Ensemble, params: &ModelParams, dp: &DriftPotential) -> Result<Ensemble> {
    let mut next = e.clone();
    next.advance(params, dp)?;
    Ok(next)
}

/// `n_steps` successive steps.
pub fn propagate(
    e: &Ensemble,
    params: &ModelParams,
    dp: &DriftPotential,
    n_steps: u64,
) -> Result<Ensemble> {
    let mut next = e.clone();
    for _ in 0..n_steps {
        next.advance(params, dp)?;
    }
    Ok(next)
}

/// Per-coordinate statistics of the displacements between two ensembles.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStatistics {
    pub sample_mean_shift: Vec<f64>,
    /// Unbiased sample variance (divisor `W − 1`).
    pub sample_variance: Vec<f64>,
    /// Standard error of each mean shift.
    pub standard_errors: Vec<f64>,
}

pub fn step_statistics(
    before: &Ensemble,
    after: &Ensemble,
    params: &ModelParams,
) -> Result<StepStatistics> {
    if before.walkers() != after.walkers() || before.n_coords != after.n_coords {
        return Err(argument("ensembles differ in shape"));
    }
    let n = before.n_coords;
    if n != params.coordinate_count() {
        return Err(argument("ensemble does not match the model's coordinates"));
    }
    let w = before.walkers() as f64;
    let disp = |k: usize| {
        before.coordinate(k).zip(after.coordinate(k)).map(move |(a, b)| {
            match before.domain.as_ref().map(|g| g.axis(k)) {
                Some(ax) if ax.boundary() == Boundary::Periodic => ax.displacement(a, b),
                _ => b - a,
            }
        })
    };
    let mut mean = vec![0.0; n];
    let mut var = vec![0.0; n];
    let mut se = vec![0.0; n];
    for k in 0..n {
        let m = disp(k).sum::<f64>() / w;
        let v = if w > 1.0 {
            disp(k).map(|d| (d - m) * (d - m)).sum::<f64>() / (w - 1.0)
        } else {
            0.0
        };
        mean[k] = m;
        var[k] = v;
        se[k] = (v / w).sqrt();
    }
    Ok(StepStatistics {
        sample_mean_shift: mean,
        sample_variance: var,
        standard_errors: se,
    })
}

/// `1.06 σ̂ W^{-1/5}`, with `σ̂` the mean per-coordinate sample deviation.
pub fn silverman_bandwidth(e: &Ensemble) -> f64 {
    let sd = (0..e.n_coords).map(|k| e.variance(k).sqrt()).sum::<f64>() / e.n_coords as f64;
    1.06 * sd * (e.walkers() as f64).powf(-0.2)
}

/// Gaussian kernel density estimate on `grid`, normalised with the grid's
/// quadrature. `None` selects the Silverman-style default, never narrower
/// than the grid spacing.
pub fn empirical_density(
    e: &Ensemble,
    grid: &Arc<Grid>,
    bandwidth: Option<f64>,
) -> Result<DensityField> {
    if e.walkers() == 0 {
        return Err(argument("empty ensemble"));
    }
    if grid.dim() != e.n_coords {
        return Err(argument("grid and ensemble dimensions differ"));
    }
    let spacing = grid.min_spacing();
    let h = match bandwidth {
        Some(b) if !(b.is_finite() && b >= spacing) => {
            return Err(argument(format!(
                "bandwidth {b} is below the grid spacing {spacing}"
            )))
        }
        Some(b) => b,
        None => silverman_bandwidth(e).max(spacing),
    };
    let inv = 1.0 / (2.0 * h * h);
    let mut acc = vec![0.0; grid.len()];
    let mut taps: [Vec<(usize, f64)>; 2] = [Vec::new(), Vec::new()];
    for w in 0..e.walkers() {
        let x = e.walker(w);
        for (k, ax) in grid.axes().iter().enumerate() {
            let t = &mut taps[k];
            t.clear();
            let r = (KDE_RADIUS * h / ax.spacing()).ceil() as i64;
            let centre = ((x[k] - ax.x_min()) / ax.spacing()).round() as i64;
            let n = ax.n_points() as i64;
            for i in centre - r..=centre + r {
                let idx = match ax.boundary() {
                    Boundary::Periodic => i.rem_euclid(n),
                    Boundary::Reflecting if (0..n).contains(&i) => i,
                    Boundary::Reflecting => continue,
                };
                let d = ax.displacement(x[k], ax.coord(idx as usize));
                t.push((idx as usize, (-d * d * inv).exp()));
            }
        }
        if grid.dim() == 1 {
            for &(i, v) in &taps[0] {
                acc[i] += v;
            }
        } else {
            for &(i, vi) in &taps[0] {
                for &(j, vj) in &taps[1] {
                    acc[grid.flatten([i, j])] += vi * vj;
                }
            }
        }
    }
    ops::normalize(&ScalarField::new(grid.clone(), acc)?)
}

fn check_density_grid(rho: &DensityField, grid: &Arc<Grid>) -> Result<()> {
    if **rho.grid() != **grid {
        return Err(argument("density and kernel grids differ"));
    }
    Ok(())
}

fn floored_log_density(rho: &DensityField) -> Result<Vec<f64>> {
    let max = rho.field().max();
    if !(max > 0.0) {
        return Err(domain("density vanishes everywhere"));
    }
    let (v, _) = rho.floored_values(REVERSE_DENSITY_FLOOR);
    Ok(v.iter().map(|r| r.ln()).collect())
}

/// `ln ζ(x_i)` of the forward kernel for every node `x_i`.
fn log_partition(s: &[f64], alphas: &Multipliers, grid: &Grid) -> Vec<f64> {
    let mut xi = vec![0.0; grid.dim()];
    let mut xk = vec![0.0; grid.dim()];
    let a = alphas.as_slice();
    let mut terms = vec![0.0; grid.len()];
    (0..grid.len())
        .map(|i| {
            grid.point_into(i, &mut xi);
            for (k, t) in terms.iter_mut().enumerate() {
                grid.point_into(k, &mut xk);
                let q: f64 = (0..grid.dim())
                    .map(|d| {
                        let dd = grid.axis(d).displacement(xi[d], xk[d]);
                        0.5 * a[d] * dd * dd
                    })
                    .sum();
                *t = grid.weight(k).ln() + s[k] - q;
            }
            log_sum_exp(&terms)
        })
        .collect()
}

fn squared_distance(grid: &Grid, alphas: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (0..grid.dim())
        .map(|d| {
            let dd = grid.axis(d).displacement(a[d], b[d]);
            0.5 * alphas[d] * dd * dd
        })
        .sum()
}

/// Bayes-reversed kernel `P(x|x') ∝ ρ(x) P(x'|x)`, as a density over `x`.
pub fn reverse_kernel(
    x_prime: &[f64],
    rho: &DensityField,
    dp: &DriftPotential,
    alpha: f64,
    grid: &Arc<Grid>,
) -> Result<DensityField> {
    check_density_grid(rho, grid)?;
    if x_prime.len() != grid.dim() {
        return Err(argument("x' has the wrong number of coordinates"));
    }
    let alphas = Multipliers::uniform(alpha, grid.dim())?;
    let s = dp.on_grid(grid)?;
    let log_zeta = log_partition(&s, &alphas, grid);
    let log_rho = floored_log_density(rho)?;
    let s_prime = dp.entropy(x_prime)?;
    let mut x = vec![0.0; grid.dim()];
    let mut log_post = Vec::with_capacity(grid.len());
    let mut unfloored_support = 0.0;
    for i in 0..grid.len() {
        grid.point_into(i, &mut x);
        let log_fwd = s_prime - squared_distance(grid, alphas.as_slice(), &x, x_prime) - log_zeta[i];
        unfloored_support += grid.weight(i) * rho.values()[i] * log_fwd.exp();
        log_post.push(grid.weight(i).ln() + log_rho[i] + log_fwd);
    }
    if !(unfloored_support > 0.0) {
        return Err(domain(format!("density vanishes wherever {x_prime:?} is reachable")));
    }
    let z = log_sum_exp(&log_post);
    let values = log_post
        .iter()
        .enumerate()
        .map(|(i, l)| (l - z).exp() / grid.weight(i))
        .collect();
    ops::normalize(&ScalarField::new(grid.clone(), values)?)
}

/// Predictive-weighted mean of `KL(reverse kernel ‖ moment-matched Gaussian)`
/// over end points `x'` on the grid. Zero exactly when every reversed kernel
/// is Gaussian.
pub fn arrow_asymmetry(
    rho: &DensityField,
    dp: &DriftPotential,
    alpha: f64,
    grid: &Arc<Grid>,
) -> Result<f64> {
    check_density_grid(rho, grid)?;
    if grid.dim() != 1 {
        return Err(argument("arrow asymmetry is implemented for 1D grids"));
    }
    let alphas = Multipliers::uniform(alpha, 1)?;
    let ax = grid.axis(0);
    let n = grid.len();
    let s = dp.on_grid(grid)?;
    let log_zeta = log_partition(&s, &alphas, grid);
    let log_rho = floored_log_density(rho)?;
    let log_w: Vec<f64> = (0..n).map(|i| grid.weight(i).ln()).collect();
    let xs = ax.coords();

    let mut num = 0.0;
    let mut den = 0.0;
    let mut log_r = vec![0.0; n];
    let mut log_g = vec![0.0; n];
    let mut pred_terms = vec![0.0; n];
    for j in 0..n {
        let xj = xs[j];
        for i in 0..n {
            let d = ax.displacement(xs[i], xj);
            let log_fwd = s[j] - 0.5 * alpha * d * d - log_zeta[i];
            log_r[i] = log_rho[i] + log_fwd;
            pred_terms[i] = if rho.values()[i] > 0.0 {
                log_w[i] + rho.values()[i].ln() + log_fwd
            } else {
                f64::NEG_INFINITY
            };
        }
        let pred = log_sum_exp(&pred_terms).exp();
        if !(pred > 0.0) {
            continue;
        }
        let zr = log_sum_exp(&log_r.iter().zip(&log_w).map(|(a, b)| a + b).collect::<Vec<_>>());
        for l in log_r.iter_mut() {
            *l -= zr;
        }
        // moments relative to x'_j, minimum image on periodic axes
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for i in 0..n {
            let p = (log_w[i] + log_r[i]).exp();
            let d = ax.displacement(xj, xs[i]);
            m1 += p * d;
            m2 += p * d * d;
        }
        let var = m2 - m1 * m1;
        if !(var > 0.0) {
            continue;
        }
        for i in 0..n {
            let d = ax.displacement(xj, xs[i]) - m1;
            log_g[i] = -0.5 * d * d / var;
        }
        let zg = log_sum_exp(&log_g.iter().zip(&log_w).map(|(a, b)| a + b).collect::<Vec<_>>());
        let kl: f64 = (0..n)
            .map(|i| {
                let p = (log_w[i] + log_r[i]).exp();
                if p > 0.0 {
                    p * (log_r[i] - (log_g[i] - zg))
                } else {
                    0.0
                }
            })
            .sum();
        let weight = grid.weight(j) * pred;
        num += weight * kl.max(0.0);
        den += weight;
    }
    if !(den > 0.0) {
        return Err(domain("no reachable end points"));
    }
    Ok(num / den)
}
