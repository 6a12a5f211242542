//! Synthetic oracles for the Monte Carlo estimators.

use loopspace::mc::{
    anderson_darling_normal, estimate, estimate_with, exp_moment, fit_rate, ks_test, lp_norm, normal_cdf, sample_rng,
    tail_exponent, Stability, TailOptions,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = sample_rng(seed, 0);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[test]
fn normal_mean_ci_coverage_over_seeds() {
    let covered = (0..20u64)
        .filter(|&seed| {
            let stat = estimate_with(100_000, seed, |rng| rng.sample::<f64, _>(StandardNormal)).unwrap();
            stat.mean.abs() < stat.ci_half_width
        })
        .count();
    // Each replication covers with probability 0.99; 19 of 20 has probability 0.98.
    assert!(covered >= 19, "covered {covered} of 20");
}

#[test]
fn constant_sampler_has_zero_variance() {
    let stat = estimate(&[2.5; 1000]).unwrap();
    assert_eq!(stat.mean, 2.5);
    assert_eq!(stat.variance, 0.0);
    assert_eq!(stat.stability, Stability::Stable);
}

#[test]
fn estimate_is_linear_under_common_seeds() {
    let a = normals(10_000, 1);
    let b = normals(10_000, 2);
    let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let lhs = estimate(&sum).unwrap().mean;
    let rhs = estimate(&a).unwrap().mean + estimate(&b).unwrap().mean;
    assert!((lhs - rhs).abs() < 1e-14);
}

#[test]
fn l2_norm_of_standard_normals() {
    let z = normals(100_000, 5);
    let l2 = lp_norm(&z, 2.0).unwrap();
    // SE of the sample second moment is √2/√n; the delta method halves it.
    let se = (2.0f64 / 100_000.0).sqrt() / 2.0;
    assert!((l2 - 1.0).abs() < 3.0 * se, "{l2}");
    assert_eq!(lp_norm(&[0.0; 10], 3.0).unwrap(), 0.0);
}

proptest! {
    #[test]
    fn lp_norm_is_monotone_in_p(v in prop::collection::vec(-10.0f64..10.0, 1..200), p in 1.0f64..4.0, dp in 0.0f64..3.0) {
        let lo = lp_norm(&v, p).unwrap();
        let hi = lp_norm(&v, p + dp).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-12) + 1e-300);
    }
}

#[test]
fn fit_rate_exact_power_laws() {
    let pts: Vec<(f64, f64)> = [0.5, 0.25, 0.125, 0.0625].iter().map(|&x: &f64| (x, x.sqrt())).collect();
    let fit = fit_rate(&pts).unwrap();
    assert!((fit.slope - 0.5).abs() < 1e-12 && (fit.r2 - 1.0).abs() < 1e-12);
    let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x: &f64| (x, 3.0 * x * x)).collect();
    let fit = fit_rate(&pts).unwrap();
    assert!((fit.slope - 2.0).abs() < 1e-12 && (fit.intercept - 3f64.ln()).abs() < 1e-12);
    assert!(fit_rate(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
    assert!(fit_rate(&[(1.0, 1.0), (2.0, 1.0)]).is_err());
}

#[test]
fn fit_rate_with_multiplicative_noise() {
    let mut rng = sample_rng(9, 0);
    for _ in 0..20 {
        let pts: Vec<(f64, f64)> = (0..8)
            .map(|i| {
                let x = 2f64.powi(-i);
                let noise: f64 = rng.sample(StandardNormal);
                (x, x.powf(0.5) * (1.0 + 0.05 * noise))
            })
            .collect();
        let fit = fit_rate(&pts).unwrap();
        assert!((fit.slope - 0.5).abs() < 0.05, "{}", fit.slope);
    }
}

#[test]
fn gaussian_tail_slope() {
    let z = normals(1_000_000, 21);
    let fit = tail_exponent(&z, &TailOptions::default()).unwrap();
    assert!(fit.ci_lo - 0.02 <= -0.5 && -0.5 <= fit.ci_hi + 0.02, "{fit:?}");
}

#[test]
fn exp_moment_stability_classes() {
    let z = normals(100_000, 4);
    // E[exp(0.25 Z²)] = (1 − 0.5)^{-1/2} = √2.
    let stat = exp_moment(&z, 0.25, true).unwrap();
    assert_eq!(stat.stability, Stability::Stable);
    assert!((stat.mean - 2f64.sqrt()).abs() < stat.ci_half_width, "{stat:?}");
    let heavy = exp_moment(&z, 2.0, true).unwrap();
    assert_ne!(heavy.stability, Stability::Stable);
}

#[test]
fn goodness_of_fit_accepts_normals() {
    let z = normals(20_000, 8);
    assert!(ks_test(&z, normal_cdf).p_value > 0.01);
    assert!(anderson_darling_normal(&z).unwrap().p_value > 0.01);
    let shifted: Vec<f64> = z.iter().map(|x| x + 0.1).collect();
    assert!(ks_test(&shifted, normal_cdf).p_value < 1e-6);
}
