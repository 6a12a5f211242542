//! Heat-kernel values, log-gradients and the semigroup identity.

use loopspace::experiments::chapman_kolmogorov_defect;
use loopspace::heatkernel::HeatKernelEvaluator;
use loopspace::manifold::ManifoldModel;

fn main() -> loopspace::Result<()> {
    let heat = HeatKernelEvaluator::new(ManifoldModel::sphere2());
    let model = heat.model().clone();
    let x = model.default_base_point();
    for (t, theta) in [(0.05, 0.3f64), (0.5, 1.5), (2.0, 3.0)] {
        let y = model.point(&[theta.sin(), 0.0, theta.cos()])?;
        let p = heat.heat_kernel(t, &x, &y)?;
        let g = heat.grad_log_heat_kernel(t, &x, &y)?;
        println!("sphere t={t:<4} angle={theta:<4} p={p:.6e} |grad log p|={:.6}", g.norm());
    }
    println!("total mass at t=0.2: {:.12}", heat.normalization_check(0.2)?);
    let defect = chapman_kolmogorov_defect(&heat, 0.1, 0.2, x.coords(), &[0.0, 1.0, 0.0])?;
    println!("Chapman-Kolmogorov defect: {defect:.3e}");

    let torus = HeatKernelEvaluator::new(ManifoldModel::torus(vec![std::f64::consts::TAU; 2])?);
    println!("torus p_1(0, 0) = {:.10}", torus.heat_kernel_raw(1.0, &[0.0, 0.0], &[0.0, 0.0])?);
    Ok(())
}
