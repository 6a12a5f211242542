//! Flow oracles: the generator of the loop flow is `D_h`, flat collapse, and
//! loop preservation on sampled loops.

use loopspace::bridge::{sample_bridge, BridgeConfig};
use loopspace::flow::{flat_density, flow_on_loops, radon_nikodym, FlowConfig};
use loopspace::functionals::{cm_norm, dh_cylindrical, divergence, CameronMartinVector, CylindricalFunctional, FourierMode, PointFunction};
use loopspace::manifold::ManifoldModel;
use loopspace::transport::TimeGrid;

fn setup(model: ManifoldModel, seed: u64) -> (BridgeConfig, CameronMartinVector) {
    let grid = TimeGrid::new(512).unwrap();
    let cfg = BridgeConfig::new(model, grid, 0.01, seed).unwrap();
    let h = CameronMartinVector::fourier(grid, 2, &[FourierMode::new(1, 0, 0.8), FourierMode::new(2, 1, 0.6)]).unwrap();
    (cfg, h)
}

#[test]
fn flow_generator_is_the_directional_derivative() {
    let (cfg, h) = setup(ManifoldModel::sphere2(), 17);
    let model = cfg.model().clone();
    let f = CylindricalFunctional::new(
        &model,
        1.0,
        vec![
            (0.25, PointFunction::Linear(vec![1.0, 0.5, -0.3])),
            (0.5, PointFunction::Linear(vec![0.2, -1.0, 0.4])),
            (0.75, PointFunction::Quadratic(vec![1.0, 0.0, 0.0, 0.0, -1.0, 0.3, 0.0, 0.3, 0.0])),
        ],
    )
    .unwrap();
    let flow = FlowConfig::new(1e-3, 0.25).unwrap();
    let eps = 1e-4;
    for id in 0..5 {
        let sample = sample_bridge(&cfg, id).unwrap();
        let exact = dh_cylindrical(&model, &f, &h, &sample.path, &sample.frames).unwrap();
        let plus = flow_on_loops(&model, cfg.r0(), &sample.path, &h, eps, &flow).unwrap();
        let minus = flow_on_loops(&model, cfg.r0(), &sample.path, &h, -eps, &flow).unwrap();
        let fd = (f.eval(&model, &plus.path).unwrap() - f.eval(&model, &minus.path).unwrap()) / (2.0 * eps);
        assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1e-2), "sample {id}: {fd} vs {exact}");
    }
}

#[test]
fn sphere_flow_keeps_loops_closed_and_moves_points_by_at_most_t_h() {
    let (cfg, h) = setup(ManifoldModel::sphere2(), 23);
    let model = cfg.model().clone();
    let flow = FlowConfig::new(1e-2, 0.25).unwrap();
    let t = 0.25;
    for id in 0..5 {
        let sample = sample_bridge(&cfg, id).unwrap();
        let out = flow_on_loops(&model, cfg.r0(), &sample.path, &h, t, &flow).unwrap();
        let n = sample.path.grid().steps();
        assert!(model.dist_raw(out.path.at(n), cfg.m0().coords()) < 1e-3);
        for k in 0..=n {
            let hk = h.h_at(k);
            let bound = t * (hk[0] * hk[0] + hk[1] * hk[1]).sqrt() + 1e-4;
            assert!(model.dist_raw(out.path.at(k), sample.path.at(k)) <= bound, "sample {id}, k {k}");
        }
        assert!(out.frames.max_orthonormality_defect() < 1e-10);
    }
}

#[test]
fn torus_density_matches_closed_form() {
    let (cfg, h) = setup(ManifoldModel::torus(vec![std::f64::consts::TAU; 2]).unwrap(), 29);
    let model = cfg.model().clone();
    let flow = FlowConfig::new(0.025, 0.25).unwrap();
    let hn2 = cm_norm(&h).powi(2);
    for id in 0..10 {
        let sample = sample_bridge(&cfg, id).unwrap();
        let delta = divergence(&model, &h, &sample.x, &sample.frames).unwrap();
        let k = radon_nikodym(&model, cfg.r0(), &sample.path, &h, 0.25, &flow).unwrap().k_t;
        let exact = flat_density(delta, hn2, 0.25);
        assert!((k - exact).abs() <= 1e-6 * exact, "sample {id}: {k} vs {exact}");
    }
}

#[test]
fn zero_flow_time_gives_unit_density() {
    let (cfg, h) = setup(ManifoldModel::sphere2(), 31);
    let flow = FlowConfig::new(1e-2, 0.25).unwrap();
    let sample = sample_bridge(&cfg, 0).unwrap();
    let est = radon_nikodym(cfg.model(), cfg.r0(), &sample.path, &h, 0.0, &flow).unwrap();
    assert_eq!(est.k_t, 1.0);
}
