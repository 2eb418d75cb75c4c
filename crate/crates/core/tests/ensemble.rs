use std::sync::Arc;

use edyn_core::ensemble::{
    arrow_asymmetry, empirical_density, propagate, reverse_kernel, step, step_statistics, Ensemble,
};
use edyn_core::numerics::{integrate, normalize};
use edyn_core::statmodel::{transition_density, Multipliers};
use edyn_core::{Boundary, DensityField, DriftPotential, Grid, ModelParams, ScalarField};
use proptest::prelude::*;

const W: usize = 100_000;

fn params(dt: f64) -> ModelParams {
    ModelParams::single(1.0, 1.0, 0.0, dt).unwrap()
}

fn line(n: usize, a: f64, b: f64, bc: Boundary) -> Arc<Grid> {
    Arc::new(Grid::line(n, a, b, bc).unwrap())
}

fn gaussian(g: &Arc<Grid>, mu: f64, sigma: f64) -> DensityField {
    normalize(&ScalarField::from_fn(g.clone(), |x| (-0.5 * ((x[0] - mu) / sigma).powi(2)).exp()).unwrap()).unwrap()
}

fn bimodal(g: &Arc<Grid>) -> DensityField {
    normalize(
        &ScalarField::from_fn(g.clone(), |x| {
            (-2.0 * (x[0] - 2.0).powi(2)).exp() + (-2.0 * (x[0] + 2.0).powi(2)).exp()
        })
        .unwrap(),
    )
    .unwrap()
}

fn l1(a: &DensityField, b: &DensityField) -> f64 {
    let d = a.field().lin_comb(1.0, b.field(), -1.0).unwrap().map(f64::abs).unwrap();
    integrate(&d)
}

#[test]
fn pure_diffusion_step() {
    let p = params(0.01);
    let e = Ensemble::at_point(&[0.0], W, 1).unwrap();
    let s = step_statistics(&e, &step(&e, &p, &DriftPotential::constant()).unwrap(), &p).unwrap();
    assert!(s.sample_mean_shift[0].abs() < 3.0 * s.standard_errors[0]);
    assert!((s.sample_variance[0] / 0.01 - 1.0).abs() < 0.02);
}

#[test]
fn linear_entropy_drifts() {
    let p = params(0.01);
    let c = 1.5;
    let e = Ensemble::at_point(&[0.3], W, 2).unwrap();
    let s = step_statistics(&e, &step(&e, &p, &DriftPotential::linear(c)).unwrap(), &p).unwrap();
    assert!((s.sample_mean_shift[0] - c * 0.01).abs() < 3.0 * s.standard_errors[0]);
}

#[test]
fn quartering_dt_halves_fluctuations() {
    let e = Ensemble::at_point(&[0.0], W, 3).unwrap();
    let sd = |dt: f64| {
        let p = params(dt);
        let s = step_statistics(&e, &step(&e, &p, &DriftPotential::constant()).unwrap(), &p).unwrap();
        s.sample_variance[0].sqrt()
    };
    let ratio = sd(0.01 / 4.0) / sd(0.01);
    assert!((ratio - 0.5).abs() < 0.01, "{ratio}");
}

#[test]
fn synthetic_gaussian_displacements() {
    let p = params(0.01);
    let before = Ensemble::at_point(&[0.0], W, 0).unwrap();
    let after = Ensemble::sample_gaussian(&[0.0], &[0.1], W, 4).unwrap();
    let s = step_statistics(&before, &after, &p).unwrap();
    assert!((s.sample_variance[0] / 0.01 - 1.0).abs() < 0.02);
}

#[test]
fn density_estimate_of_known_gaussian() {
    let g = line(512, -8.0, 8.0, Boundary::Reflecting);
    let truth = gaussian(&g, 0.0, 1.0);
    let e = Ensemble::sample_gaussian(&[0.0], &[1.0], W, 5).unwrap();
    let d = empirical_density(&e, &g, None).unwrap();
    assert!(l1(&d, &truth) < 0.02);
}

#[test]
fn more_walkers_estimate_better_on_average() {
    let g = line(256, -8.0, 8.0, Boundary::Reflecting);
    let truth = gaussian(&g, 0.0, 1.0);
    let mean_l1 = |w: usize| {
        (0..10)
            .map(|seed| {
                let e = Ensemble::sample_gaussian(&[0.0], &[1.0], w, 100 + seed).unwrap();
                l1(&empirical_density(&e, &g, None).unwrap(), &truth)
            })
            .sum::<f64>()
            / 10.0
    };
    assert!(mean_l1(20_000) < mean_l1(10_000));
}

#[test]
fn brownian_variance_grows_linearly() {
    let p = params(0.01);
    let e = Ensemble::at_point(&[0.0], W, 6).unwrap();
    let e = propagate(&e, &p, &DriftPotential::constant(), 100).unwrap();
    assert!((e.time() - 1.0).abs() < 1e-12);
    assert!((e.variance(0) / 1.0 - 1.0).abs() < 0.03);
}

#[test]
fn ornstein_uhlenbeck_reaches_stationary_spread() {
    // S = −x²/2 with η = m = 1 gives b = −x, σ²∞ = η/2m
    let p = params(0.01);
    let dp = DriftPotential::Polynomial(vec![0.0, 0.0, -0.5]);
    let e = Ensemble::at_point(&[2.0], W, 7).unwrap();
    let e = propagate(&e, &p, &dp, 1000).unwrap();
    assert!((e.variance(0) / 0.5 - 1.0).abs() < 0.05);
}

#[test]
fn identical_seeds_identical_trajectories_any_thread_count() {
    let p = params(0.01);
    let dp = DriftPotential::Polynomial(vec![0.0, 0.3, -0.5]);
    let e = Ensemble::sample_gaussian(&[0.0], &[1.0], 20_000, 8).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| propagate(&e, &p, &dp, 50).unwrap())
    };
    let a = run(1);
    let b = run(4);
    let bits = |e: &Ensemble| e.positions().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&propagate(&Ensemble::sample_gaussian(&[0.0], &[1.0], 20_000, 9).unwrap(), &p, &dp, 50).unwrap()));
}

#[test]
fn drift_and_fluctuation_scaling_exponents() {
    let c = 10.0;
    let e = Ensemble::at_point(&[0.0], W, 10).unwrap();
    let dts = [1e-2, 1e-3, 1e-4];
    let (mut lm, mut ls, mut lt) = (vec![], vec![], vec![]);
    for dt in dts {
        let p = params(dt);
        let s = step_statistics(&e, &step(&e, &p, &DriftPotential::linear(c)).unwrap(), &p).unwrap();
        lm.push(s.sample_mean_shift[0].ln());
        ls.push(s.sample_variance[0].sqrt().ln());
        lt.push(dt.ln());
    }
    let slope = |y: &[f64]| {
        let mx = lt.iter().sum::<f64>() / 3.0;
        let my = y.iter().sum::<f64>() / 3.0;
        let num: f64 = lt.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = lt.iter().map(|x| (x - mx).powi(2)).sum();
        num / den
    };
    assert!((slope(&lm) - 1.0).abs() < 0.1);
    assert!((slope(&ls) - 0.5).abs() < 0.05);
}

#[test]
fn chapman_kolmogorov_two_steps_match_composed_kernel() {
    let dt = 0.01;
    let p = params(dt);
    let g = line(401, -1.0, 1.0, Boundary::Reflecting);
    let e = Ensemble::at_point(&[0.0], W, 11).unwrap();
    let e2 = propagate(&e, &p, &DriftPotential::constant(), 2).unwrap();
    // composed kernel: Gaussian of variance 2ηΔt/m, i.e. multiplier α/2
    let alpha = 1.0 / dt;
    let composed = transition_density(&[0.0], &DriftPotential::constant(), &Multipliers::uniform(alpha / 2.0, 1).unwrap(), &g).unwrap();
    assert!(l1(&empirical_density(&e2, &g, None).unwrap(), &composed) < 0.05);
}

#[test]
fn uniform_prior_reverse_kernel_is_forward_kernel() {
    let g = line(200, -10.0, 10.0, Boundary::Periodic);
    let flat = normalize(&ScalarField::constant(g.clone(), 1.0).unwrap()).unwrap();
    let alpha = 4.0;
    let x_prime = [1.3];
    let rev = reverse_kernel(&x_prime, &flat, &DriftPotential::constant(), alpha, &g).unwrap();
    let fwd = transition_density(&x_prime, &DriftPotential::constant(), &Multipliers::uniform(alpha, 1).unwrap(), &g).unwrap();
    assert!(rev.field().max_abs_diff(fwd.field()).unwrap() < 1e-12);
}

#[test]
fn gaussian_prior_reverse_kernel_by_conjugacy() {
    let g = line(2001, -10.0, 10.0, Boundary::Reflecting);
    let rev = reverse_kernel(&[1.0], &gaussian(&g, 0.0, 1.0), &DriftPotential::constant(), 4.0, &g).unwrap();
    // precision-weighted mean (1·4)/(1 + 4), variance 1/(1 + 4)
    assert!((rev.mean(0) - 0.8).abs() < 1e-8);
    assert!((rev.variance(0) - 0.2).abs() < 1e-8);
}

#[test]
fn bimodal_prior_reverse_kernel_is_bimodal() {
    let g = line(801, -8.0, 8.0, Boundary::Reflecting);
    let rev = reverse_kernel(&[0.0], &bimodal(&g), &DriftPotential::constant(), 1.0, &g).unwrap();
    let v = rev.values();
    let maxima = (1..v.len() - 1).filter(|&i| v[i] > v[i - 1] && v[i] > v[i + 1]).count();
    assert_eq!(maxima, 2);
}

#[test]
fn reverse_kernel_needs_mass_where_x_prime_is_reachable() {
    let g = line(64, -4.0, 4.0, Boundary::Reflecting);
    let mut v = vec![0.0; 64];
    v[0] = 1.0;
    let spike = normalize(&ScalarField::new(g.clone(), v).unwrap()).unwrap();
    let r = reverse_kernel(&[4.0], &spike, &DriftPotential::constant(), 1000.0, &g);
    assert!(matches!(r, Err(edyn_core::Error::Domain(_))));
}

#[test]
fn arrow_asymmetry_examples() {
    let dp = DriftPotential::constant();
    let g = line(200, -10.0, 10.0, Boundary::Periodic);
    let flat = normalize(&ScalarField::constant(g.clone(), 1.0).unwrap()).unwrap();
    assert!(arrow_asymmetry(&flat, &dp, 4.0, &g).unwrap() < 1e-10);

    let g = line(401, -10.0, 10.0, Boundary::Reflecting);
    assert!(arrow_asymmetry(&gaussian(&g, 0.0, 1.0), &dp, 4.0, &g).unwrap() < 1e-8);
    assert!(arrow_asymmetry(&bimodal(&g), &dp, 1.0, &g).unwrap() > 1e-3);
}

#[test]
fn ensemble_sampling_reproduces_known_variance() {
    // sanity check of the initial sampler against Var = σ²
    let e = Ensemble::sample_gaussian(&[1.0], &[2.0], W, 12).unwrap();
    assert!((e.variance(0) / 4.0 - 1.0).abs() < 0.02);
    assert!((e.mean(0) - 1.0).abs() < 3.0 * (4.0 / W as f64).sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reverse_kernel_is_normalised(x in -3.0f64..3.0, mu in -1.0f64..1.0, sigma in 0.5f64..2.0, alpha in 0.5f64..20.0) {
        let g = line(241, -12.0, 12.0, Boundary::Reflecting);
        let rev = reverse_kernel(&[x], &gaussian(&g, mu, sigma), &DriftPotential::linear(0.3), alpha, &g).unwrap();
        prop_assert!((integrate(rev.field()) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn arrow_asymmetry_is_nonnegative(a in 0.1f64..1.0, sep in 0.0f64..3.0, alpha in 0.5f64..8.0) {
        let g = line(96, -8.0, 8.0, Boundary::Reflecting);
        let rho = normalize(&ScalarField::from_fn(g.clone(), |x| {
            (-(x[0] - sep).powi(2)).exp() + a * (-(x[0] + sep).powi(2)).exp()
        }).unwrap()).unwrap();
        prop_assert!(arrow_asymmetry(&rho, &DriftPotential::constant(), alpha, &g).unwrap() >= 0.0);
    }
}
