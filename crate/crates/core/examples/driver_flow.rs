//! Flows a sphere loop along a Cameron-Martin direction and evaluates the
//! Radon-Nikodym density of the flowed measure.

use loopspace::bridge::{sample_bridge, BridgeConfig};
use loopspace::flow::{flow_on_loops, flow_property_check, radon_nikodym, FlowConfig};
use loopspace::functionals::{CameronMartinVector, FourierMode};
use loopspace::manifold::ManifoldModel;
use loopspace::transport::TimeGrid;

fn main() -> loopspace::Result<()> {
    let model = ManifoldModel::sphere2();
    let grid = TimeGrid::new(512)?;
    let cfg = BridgeConfig::new(model.clone(), grid, 0.01, 3)?;
    let h = CameronMartinVector::fourier(grid, 2, &[FourierMode::new(1, 0, 0.8), FourierMode::new(2, 1, 0.6)])?;
    let loop0 = sample_bridge(&cfg, 0)?;
    let flow = FlowConfig::new(0.01, 0.25)?;

    let moved = flow_on_loops(&model, cfg.r0(), &loop0.path, &h, 0.25, &flow)?;
    let n = grid.steps();
    println!("endpoint drift after t = 0.25: {:.2e}", model.dist_raw(moved.path.at(n), cfg.m0().coords()));
    let worst = (0..=n)
        .map(|k| {
            let hk = h.h_at(k);
            model.dist_raw(moved.path.at(k), loop0.path.at(k)) - 0.25 * (hk[0] * hk[0] + hk[1] * hk[1]).sqrt()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    println!("max of dist(moved, original) - t|h(s)|: {worst:.2e}");

    // Steps that divide neither 0.1 nor 0.15, so both sides take different steps.
    for dt in [0.03, 0.015, 0.0075] {
        let cfg_dt = FlowConfig::new(dt, dt)?;
        let defect = flow_property_check(&model, cfg.r0(), &loop0.x, &h, 0.1, 0.15, &cfg_dt)?;
        println!("group-property defect at dt = {dt}: {defect:.3e}");
    }

    let density = radon_nikodym(&model, cfg.r0(), &loop0.path, &h, 0.25, &FlowConfig::new(0.025, 0.25)?)?;
    println!("K_0.25 = {:.6} (log {:.6})", density.k_t, density.log_k_t);
    Ok(())
}
