//! Heat-kernel oracles: symmetry, the semigroup identity and the gradient of
//! `log p` against finite differences.

use loopspace::experiments::chapman_kolmogorov_defect;
use loopspace::heatkernel::HeatKernelEvaluator;
use loopspace::manifold::ManifoldModel;
use proptest::prelude::*;

fn sphere_point(theta: f64, phi: f64) -> Vec<f64> {
    vec![theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sphere_kernel_is_symmetric(t in 0.1f64..2.0,
                                  a in (0.0f64..3.14, 0.0f64..6.28),
                                  b in (0.0f64..3.14, 0.0f64..6.28)) {
        let heat = HeatKernelEvaluator::new(ManifoldModel::sphere2());
        let (x, y) = (sphere_point(a.0, a.1), sphere_point(b.0, b.1));
        let pxy = heat.heat_kernel_raw(t, &x, &y).unwrap();
        let pyx = heat.heat_kernel_raw(t, &y, &x).unwrap();
        prop_assert!(pxy > 0.0);
        prop_assert!((pxy - pyx).abs() <= 1e-12 * pxy.max(1.0));
    }

    #[test]
    fn torus_kernel_is_symmetric(t in 0.01f64..2.0,
                                 x in prop::array::uniform2(0.0f64..6.28),
                                 y in prop::array::uniform2(0.0f64..6.28)) {
        let model = ManifoldModel::torus(vec![std::f64::consts::TAU, 4.0]).unwrap();
        let heat = HeatKernelEvaluator::new(model);
        let pxy = heat.heat_kernel_raw(t, &x, &y).unwrap();
        let pyx = heat.heat_kernel_raw(t, &y, &x).unwrap();
        prop_assert!((pxy - pyx).abs() <= 1e-12 * pxy.max(1.0));
    }
}

#[test]
fn chapman_kolmogorov_on_both_models() {
    let sphere = HeatKernelEvaluator::new(ManifoldModel::sphere2());
    let x = sphere_point(0.3, 0.2);
    let y = sphere_point(1.9, 2.5);
    for (s, t) in [(0.1, 0.2), (0.05, 0.3), (0.25, 0.25)] {
        let defect = chapman_kolmogorov_defect(&sphere, s, t, &x, &y).unwrap();
        assert!(defect < 1e-8, "sphere s={s} t={t}: {defect:e}");
    }
    let circle = HeatKernelEvaluator::new(ManifoldModel::circle(std::f64::consts::TAU).unwrap());
    for (s, t) in [(0.1, 0.2), (0.05, 0.3)] {
        let defect = chapman_kolmogorov_defect(&circle, s, t, &[0.4], &[5.0]).unwrap();
        assert!(defect < 1e-8, "circle s={s} t={t}: {defect:e}");
    }
}

#[test]
fn total_mass_is_one() {
    let sphere = HeatKernelEvaluator::new(ManifoldModel::sphere2());
    for t in [0.1, 0.5, 1.0] {
        let mass = sphere.normalization_check(t).unwrap();
        assert!((mass - 1.0).abs() < 1e-8, "t={t}: {mass}");
    }
}

#[test]
fn sphere_log_gradient_matches_finite_difference() {
    let model = ManifoldModel::sphere2();
    let heat = HeatKernelEvaluator::new(model.clone());
    let eps = 1e-5;
    for (t, a, b) in [(0.05, (0.4, 0.1), (0.9, 1.0)), (0.3, (1.2, 2.0), (2.4, -1.0)), (1.0, (0.2, 0.0), (2.8, 3.0))] {
        let p = model.point(&sphere_point(a.0, a.1)).unwrap();
        let q = model.point(&sphere_point(b.0, b.1)).unwrap();
        let grad = heat.grad_log_heat_kernel(t, &p, &q).unwrap();
        let frame = model.standard_frame(&p);
        for j in 0..2 {
            let e: Vec<f64> = (0..3).map(|i| frame.frame()[(i, j)]).collect();
            let step = |c: f64| {
                let v = model.tangent(&p, &e.iter().map(|x| c * x).collect::<Vec<_>>()).unwrap();
                let moved = model.exp_map(&p, &v).unwrap();
                heat.heat_kernel(t, &moved, &q).unwrap().ln()
            };
            let fd = (step(eps) - step(-eps)) / (2.0 * eps);
            let exact: f64 = grad.vec().iter().zip(&e).map(|(g, x)| g * x).sum();
            assert!((fd - exact).abs() < 1e-6 * exact.abs().max(1.0), "t={t} j={j}: {fd} vs {exact}");
        }
    }
}

#[test]
fn torus_log_gradient_matches_finite_difference() {
    let model = ManifoldModel::torus(vec![std::f64::consts::TAU, 3.0]).unwrap();
    let heat = HeatKernelEvaluator::new(model.clone());
    let eps = 1e-5;
    let p = [1.0, 0.5];
    let q = [4.0, 2.9];
    for t in [0.05, 0.5, 2.0] {
        let mut grad = vec![0.0; 2];
        heat.grad_log_raw(t, &p, &q, &mut grad).unwrap();
        for j in 0..2 {
            let mut plus = p;
            let mut minus = p;
            plus[j] += eps;
            minus[j] -= eps;
            let fd = (heat.heat_kernel_raw(t, &plus, &q).unwrap().ln() - heat.heat_kernel_raw(t, &minus, &q).unwrap().ln())
                / (2.0 * eps);
            assert!((fd - grad[j]).abs() < 1e-6 * grad[j].abs().max(1.0), "t={t} j={j}: {fd} vs {}", grad[j]);
        }
    }
}
