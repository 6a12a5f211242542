//! Geodesics, rolling frames and curvature on the sphere and a flat torus.

use loopspace::manifold::ManifoldModel;

fn main() -> loopspace::Result<()> {
    let sphere = ManifoldModel::sphere2();
    let north = sphere.default_base_point();
    let r0 = sphere.standard_frame(&north);
    println!("base point {:?}", north.coords());

    let v = sphere.tangent(&north, &[std::f64::consts::FRAC_PI_2, 0.0, 0.0])?;
    let equator = sphere.exp_map(&north, &v)?;
    println!("exp(pi/2 e1) = {:?}, distance {:.6}", equator.coords(), sphere.dist(&north, &equator));

    println!("Ricci at the base frame:\n{}", sphere.ricci(&r0));
    println!("Omega(e1, e2):\n{}", sphere.curvature_form(&r0, &[1.0, 0.0], &[0.0, 1.0]));
    println!("sup |Ric| = {:.6}", sphere.ricci_sup_norm());

    // Roll the frame around a small square; the holonomy is a rotation by the enclosed area.
    let side = 0.1;
    let mut fp = r0.clone();
    for dx in [[side, 0.0], [0.0, side], [-side, 0.0], [0.0, -side]] {
        fp = sphere.parallel_frame_step(&fp, &dx)?;
    }
    let rotation = r0.frame().transpose() * fp.frame();
    println!(
        "holonomy angle around a {side}x{side} square: {:.6} (area {:.6})",
        rotation[(1, 0)].atan2(rotation[(0, 0)]),
        side * side
    );

    let torus = ManifoldModel::torus(vec![std::f64::consts::TAU, 3.0])?;
    let p = torus.point(&[6.0, 0.1])?;
    let q = torus.point(&[0.2, 2.9])?;
    println!("torus nearest-image distance {:.6}", torus.dist(&p, &q));
    Ok(())
}
