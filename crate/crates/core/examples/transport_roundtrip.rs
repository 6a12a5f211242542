//! Develops Brownian paths onto the sphere and recovers them by
//! anti-development on coarser grids, showing the round-trip error shrink.

use loopspace::bridge::wiener_path;
use loopspace::experiments::round_trip_errors;
use loopspace::manifold::ManifoldModel;
use loopspace::mc::{fit_rate, sample_rng};
use loopspace::transport::{develop, parallel_transport, TimeGrid};

fn main() -> loopspace::Result<()> {
    let model = ManifoldModel::sphere2();
    let r0 = model.standard_frame(&model.default_base_point());
    let fine_grid = TimeGrid::new(16384)?;

    let x = wiener_path(fine_grid, 2, &mut sample_rng(5, 0));
    let (_, frames) = develop(&model, &x, &r0)?;
    println!("frame orthonormality defect after 16384 steps: {:.2e}", frames.max_orthonormality_defect());
    println!("U_1 in ambient coordinates:\n{}", parallel_transport(&frames, fine_grid.steps())?);

    let ns = [128, 256, 512, 1024, 2048];
    let paths = 64;
    let mut mean_sq = vec![0.0; ns.len()];
    for id in 0..paths {
        let fine = wiener_path(fine_grid, 2, &mut sample_rng(5, id));
        for (m, err) in mean_sq.iter_mut().zip(round_trip_errors(&model, &r0, &fine, &ns)?) {
            *m += err.endpoint * err.endpoint / paths as f64;
        }
    }
    let pts: Vec<(f64, f64)> = ns.iter().zip(&mean_sq).map(|(&n, &e)| (n as f64, e.sqrt())).collect();
    for (n, e) in &pts {
        println!("N = {n:>5}: RMS endpoint round-trip error {e:.3e}");
    }
    println!("strong order: {:.3}", -fit_rate(&pts)?.slope);
    Ok(())
}
