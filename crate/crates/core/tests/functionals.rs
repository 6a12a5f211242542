//! Oracles for the divergence, the Malliavin derivative of the divergence and
//! the fractional Hölder norm.

use loopspace::bridge::wiener_path;
use loopspace::functionals::{
    cm_inner, cm_norm, divergence, divergence_of_input, divergence_profile, holder_norm, malliavin_deriv_div,
    CameronMartinVector, FourierMode, HolderParams,
};
use loopspace::manifold::ManifoldModel;
use loopspace::mc::sample_rng;
use loopspace::transport::{develop, EuclideanPath, TimeGrid};
use proptest::prelude::*;

fn direction(grid: TimeGrid, modes: &[(usize, usize, f64)]) -> CameronMartinVector {
    let modes: Vec<FourierMode> = modes.iter().map(|&(k, j, c)| FourierMode::new(k, j, c)).collect();
    CameronMartinVector::fourier(grid, 2, &modes).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn divergence_is_linear_in_h(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let model = ManifoldModel::sphere2();
        let r0 = model.standard_frame(&model.default_base_point());
        let grid = TimeGrid::new(128).unwrap();
        let x = wiener_path(grid, 2, &mut sample_rng(seed, 0));
        let (_, frames) = develop(&model, &x, &r0).unwrap();
        let h = direction(grid, &[(1, 0, 1.0)]);
        let k = direction(grid, &[(2, 1, 0.5), (3, 0, 0.3)]);
        let hk = h.combine(a, &k, b).unwrap();
        let lhs = divergence(&model, &hk, &x, &frames).unwrap();
        let rhs = a * divergence(&model, &h, &x, &frames).unwrap() + b * divergence(&model, &k, &x, &frames).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-11 * (1.0 + rhs.abs()));
    }

    #[test]
    fn holder_norm_is_homogeneous(seed in 0u64..1000, c in -3.0f64..3.0) {
        let grid = TimeGrid::new(64).unwrap();
        let x = wiener_path(grid, 2, &mut sample_rng(seed, 1));
        let params = HolderParams::new(2, 0.25).unwrap();
        let scaled = EuclideanPath::zeros(grid, 2).axpy(c, &x).unwrap();
        let lhs = holder_norm(&scaled, &params);
        let rhs = c.abs() * holder_norm(&x, &params);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
    }

    #[test]
    fn cm_norm_is_homogeneous(c in -5.0f64..5.0) {
        let grid = TimeGrid::new(64).unwrap();
        let h = direction(grid, &[(1, 0, 0.8), (2, 1, 0.6)]);
        prop_assert!((cm_norm(&h.scale(c)) - c.abs() * cm_norm(&h)).abs() < 1e-13);
    }
}

#[test]
fn flat_divergence_is_the_wiener_integral_of_hdot() {
    let model = ManifoldModel::torus(vec![std::f64::consts::TAU; 2]).unwrap();
    let r0 = model.standard_frame(&model.default_base_point());
    let grid = TimeGrid::new(256).unwrap();
    let x = wiener_path(grid, 2, &mut sample_rng(3, 0));
    let (_, frames) = develop(&model, &x, &r0).unwrap();
    let h = direction(grid, &[(1, 0, 0.8), (2, 1, 0.6)]);
    let profile = divergence_profile(&model, &h, &x, &frames).unwrap();
    let mut acc = 0.0;
    for k in 0..grid.steps() {
        let dx = x.increment(k);
        acc += h.hdot_at(k)[0] * dx[0] + h.hdot_at(k)[1] * dx[1];
        assert!((profile[k + 1] - acc).abs() < 1e-12);
    }
}

#[test]
fn malliavin_derivative_matches_finite_difference() {
    let grid = TimeGrid::new(256).unwrap();
    let h = direction(grid, &[(1, 0, 0.8), (2, 1, 0.6)]);
    let k = direction(grid, &[(1, 0, 0.5), (2, 1, 0.4), (3, 0, 0.7)]);
    let eps = 1e-4;
    for model in [ManifoldModel::torus(vec![std::f64::consts::TAU; 2]).unwrap(), ManifoldModel::sphere2()] {
        let r0 = model.standard_frame(&model.default_base_point());
        for seed in 0..5 {
            let x = wiener_path(grid, 2, &mut sample_rng(11, seed));
            let exact = malliavin_deriv_div(&model, &r0, &h, &k, &x).unwrap();
            let kp = k.as_path();
            let plus = divergence_of_input(&model, &r0, &h, &x.axpy(eps, &kp).unwrap()).unwrap();
            let minus = divergence_of_input(&model, &r0, &h, &x.axpy(-eps, &kp).unwrap()).unwrap();
            let fd = (plus - minus) / (2.0 * eps);
            assert!((fd - exact).abs() < 1e-3 * exact.abs().max(1e-3), "seed {seed}: {fd} vs {exact}");
            if model.is_flat() {
                assert!((exact - cm_inner(&h, &k)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn holder_norm_of_linear_path() {
    // x(t) = t: ∬|t−s|^{4−2}dsdt = 1/6, so the norm is (1/6)^{1/4}.
    let params = HolderParams::new(2, 0.25).unwrap();
    let mut prev = f64::INFINITY;
    for n in [64, 256, 1024] {
        let grid = TimeGrid::new(n).unwrap();
        let x = EuclideanPath::from_fn(grid, 1, |t| vec![t]);
        let err = (holder_norm(&x, &params) - (1.0f64 / 6.0).powf(0.25)).abs();
        assert!(err < prev, "error must shrink under refinement");
        prev = err;
    }
    assert!(prev < 1e-3, "{prev}");
}

#[test]
fn holder_norm_refinement_converges_on_smooth_paths() {
    let params = HolderParams::new(2, 0.3).unwrap();
    let f = |t: f64| vec![(3.0 * t).sin(), t * t];
    let values: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&n| holder_norm(&EuclideanPath::from_fn(TimeGrid::new(n).unwrap(), 2, f), &params))
        .collect();
    let d1 = (values[1] - values[0]).abs();
    let d2 = (values[2] - values[1]).abs();
    assert!(d2 < d1, "{values:?}");
}
