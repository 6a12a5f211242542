//! Checks the integration-by-parts identity E[D_hF] = E[F δ(h)] on sphere
//! loops and the Malliavin derivative of the divergence against finite
//! differences.

use loopspace::bridge::{wiener_path, BridgeConfig, BridgeSampler};
use loopspace::functionals::{
    cm_norm, divergence, divergence_of_input, malliavin_deriv_div, CameronMartinVector, CylindricalFunctional,
    FourierMode, PointFunction,
};
use loopspace::manifold::ManifoldModel;
use loopspace::mc::{estimate, par_samples, sample_rng};
use loopspace::transport::TimeGrid;

fn main() -> loopspace::Result<()> {
    let model = ManifoldModel::sphere2();
    let grid = TimeGrid::new(512)?;
    let cfg = BridgeConfig::new(model.clone(), grid, 0.01, 1)?;
    let sampler = BridgeSampler::new(cfg.clone())?;
    let h = CameronMartinVector::fourier(grid, 2, &[FourierMode::new(1, 0, 0.8), FourierMode::new(2, 1, 0.6)])?;
    println!("|h|_H = {:.6}, h(1) = 0: {}", cm_norm(&h), h.in_h0());

    let f = CylindricalFunctional::new(&model, 1.0, vec![(0.5, PointFunction::Linear(vec![1.0, 0.0, 0.0]))])?;
    let pairs = par_samples(4000, |id| -> loopspace::Result<(f64, f64)> {
        let s = sampler.sample(id)?;
        let dh = f.dh(&model, &h, &s.path, &s.frames)?;
        let fd = f.eval(&model, &s.path)? * divergence(&model, &h, &s.x, &s.frames)?;
        Ok((dh, fd))
    });
    let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<loopspace::Result<_>>()?;
    let diff: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let stat = estimate(&diff)?;
    println!("E[D_hF - F delta(h)] = {:.4} +- {:.4} (99% CI, 4000 loops)", stat.mean, stat.ci_half_width);

    let r0 = cfg.r0().clone();
    let k = CameronMartinVector::fourier(grid, 2, &[FourierMode::new(1, 0, 0.5), FourierMode::new(3, 1, 0.7)])?;
    let x = wiener_path(grid, 2, &mut sample_rng(2, 0));
    let exact = malliavin_deriv_div(&model, &r0, &h, &k, &x)?;
    let eps = 1e-4;
    let plus = divergence_of_input(&model, &r0, &h, &x.axpy(eps, &k.as_path())?)?;
    let minus = divergence_of_input(&model, &r0, &h, &x.axpy(-eps, &k.as_path())?)?;
    println!("<grad delta(h), k>: formula {exact:.8}, finite difference {:.8}", (plus - minus) / (2.0 * eps));
    Ok(())
}
