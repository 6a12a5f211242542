//! The fractional Hölder norm, its variational rate constant and an
//! exponential moment on Brownian paths.

use loopspace::bridge::wiener_path;
use loopspace::functionals::{holder_norm, holder_rate_constant, HolderParams};
use loopspace::mc::{exp_moment, par_samples, sample_rng};
use loopspace::transport::{EuclideanPath, TimeGrid};

fn main() -> loopspace::Result<()> {
    let params = HolderParams::new(2, 0.25)?;
    let grid = TimeGrid::new(256)?;
    let linear = EuclideanPath::from_fn(grid, 1, |t| vec![t]);
    println!(
        "linear path: {:.6} (exact (1/6)^(1/4) = {:.6})",
        holder_norm(&linear, &params),
        (1.0f64 / 6.0).powf(0.25)
    );

    let rate = holder_rate_constant(&params, grid, 8, 0);
    println!("lambda_0 = {:.5} (converged: {})", rate.value, rate.converged);

    let norms = par_samples(5000, |id| holder_norm(&wiener_path(grid, 1, &mut sample_rng(4, id)), &params));
    let m = exp_moment(&norms, 0.5 * rate.value, true)?;
    println!("E[exp(lambda_0/2 |x|^2)] = {:.4} +- {:.4} [{}]", m.mean, m.ci_half_width, m.stability);
    Ok(())
}
