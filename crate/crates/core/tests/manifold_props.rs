//! Property tests for the geometry kernels on the sphere and the torus.

use loopspace::manifold::{FramePoint, ManifoldModel, Point};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn sphere_point(theta: f64, phi: f64) -> Vec<f64> {
    vec![theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

fn sphere_frame(model: &ManifoldModel, theta: f64, phi: f64, rot: f64) -> FramePoint {
    let p = model.point(&sphere_point(theta, phi)).unwrap();
    let fp = model.standard_frame(&p);
    let o = DMatrix::from_row_slice(2, 2, &[rot.cos(), -rot.sin(), rot.sin(), rot.cos()]);
    fp.rotate(&o)
}

fn tangent_of(fp: &FramePoint, a: &[f64]) -> Vec<f64> {
    let f = fp.frame();
    (0..f.nrows()).map(|i| (0..f.ncols()).map(|j| f[(i, j)] * a[j]).sum()).collect()
}

fn angle() -> impl Strategy<Value = (f64, f64)> {
    (0.05f64..3.09, 0.0f64..std::f64::consts::TAU)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn curvature_form_is_skew((theta, phi) in angle(), rot in 0.0f64..6.28,
                              a in prop::array::uniform2(-2.0f64..2.0),
                              b in prop::array::uniform2(-2.0f64..2.0)) {
        let model = ManifoldModel::sphere2();
        let fp = sphere_frame(&model, theta, phi, rot);
        let omega = model.curvature_form(&fp, &a, &b);
        let skew = (&omega + omega.transpose()).abs().max();
        prop_assert!(skew < 1e-14);
        let swapped = model.curvature_form(&fp, &b, &a);
        prop_assert!((&omega + swapped).abs().max() < 1e-14);
    }

    #[test]
    fn first_bianchi_identity((theta, phi) in angle(), rot in 0.0f64..6.28,
                              a in prop::array::uniform2(-2.0f64..2.0),
                              b in prop::array::uniform2(-2.0f64..2.0),
                              c in prop::array::uniform2(-2.0f64..2.0)) {
        let model = ManifoldModel::sphere2();
        let fp = sphere_frame(&model, theta, phi, rot);
        let (x, y, z) = (tangent_of(&fp, &a), tangent_of(&fp, &b), tangent_of(&fp, &c));
        let mut r1 = [0.0; 3];
        let mut r2 = [0.0; 3];
        let mut r3 = [0.0; 3];
        model.curvature_tensor_raw(&x, &y, &z, &mut r1);
        model.curvature_tensor_raw(&y, &z, &x, &mut r2);
        model.curvature_tensor_raw(&z, &x, &y, &mut r3);
        for i in 0..3 {
            prop_assert!((r1[i] + r2[i] + r3[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn ricci_is_identity_on_unit_sphere((theta, phi) in angle(), rot in 0.0f64..6.28) {
        let model = ManifoldModel::sphere2();
        let fp = sphere_frame(&model, theta, phi, rot);
        let ric = model.ricci(&fp);
        prop_assert!((ric - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-14);
    }

    #[test]
    fn sphere_triangle_inequality(p in angle(), q in angle(), r in angle()) {
        let model = ManifoldModel::sphere2();
        let p = model.point(&sphere_point(p.0, p.1)).unwrap();
        let q = model.point(&sphere_point(q.0, q.1)).unwrap();
        let r = model.point(&sphere_point(r.0, r.1)).unwrap();
        prop_assert!(model.dist(&p, &r) <= model.dist(&p, &q) + model.dist(&q, &r) + 1e-12);
        prop_assert!((model.dist(&p, &q) - model.dist(&q, &p)).abs() < 1e-14);
    }

    #[test]
    fn torus_triangle_inequality(p in prop::array::uniform2(0.0f64..6.28),
                                 q in prop::array::uniform2(0.0f64..6.28),
                                 r in prop::array::uniform2(0.0f64..6.28)) {
        let model = ManifoldModel::torus(vec![std::f64::consts::TAU, 3.0]).unwrap();
        let pt = |v: [f64; 2]| -> Point { model.point(&v).unwrap() };
        let (p, q, r) = (pt(p), pt(q), pt(r));
        prop_assert!(model.dist(&p, &r) <= model.dist(&p, &q) + model.dist(&q, &r) + 1e-12);
    }

    #[test]
    fn exp_log_round_trip((theta, phi) in angle(), rot in 0.0f64..6.28,
                          a in prop::array::uniform2(-1.5f64..1.5)) {
        let model = ManifoldModel::sphere2();
        let fp = sphere_frame(&model, theta, phi, rot);
        let v = model.tangent(fp.base(), &tangent_of(&fp, &a)).unwrap();
        let q = model.exp_map(fp.base(), &v).unwrap();
        let back = model.log_map(fp.base(), &q).unwrap();
        for (x, y) in back.vec().iter().zip(v.vec()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert!((model.dist(fp.base(), &q) - v.norm()).abs() < 1e-12);
    }

    #[test]
    fn rolling_preserves_orthonormality((theta, phi) in angle(), rot in 0.0f64..6.28,
                                        steps in prop::collection::vec(prop::array::uniform2(-0.3f64..0.3), 1..200)) {
        let model = ManifoldModel::sphere2();
        let mut fp = sphere_frame(&model, theta, phi, rot);
        for dx in &steps {
            fp = model.parallel_frame_step(&fp, dx).unwrap();
        }
        prop_assert!(fp.orthonormality_defect() < 1e-12);
        let p = fp.base().coords();
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        let f = fp.frame();
        for j in 0..2 {
            let tangency: f64 = (0..3).map(|i| f[(i, j)] * p[i]).sum();
            prop_assert!(tangency.abs() < 1e-12);
        }
    }
}

#[test]
fn flat_torus_has_no_curvature() {
    let model = ManifoldModel::torus(vec![1.0, 2.0, 3.0]).unwrap();
    let fp = model.standard_frame(&model.default_base_point());
    assert_eq!(model.ricci(&fp).abs().max(), 0.0);
    assert_eq!(model.curvature_form(&fp, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).abs().max(), 0.0);
    assert_eq!(model.ricci_sup_norm(), 0.0);
}

#[test]
fn sphere_ricci_sup_norm_is_one() {
    assert!((ManifoldModel::sphere2().ricci_sup_norm() - 1.0).abs() < 1e-12);
}
