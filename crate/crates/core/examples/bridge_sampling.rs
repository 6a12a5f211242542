//! Samples Brownian loops on the sphere, compares a marginal with its exact
//! density and writes a few loops to CSV.

use loopspace::bridge::{write_samples_file, BridgeConfig, BridgeSampler, MarginalOracle};
use loopspace::manifold::ManifoldModel;
use loopspace::mc::{ks_test, par_samples};
use loopspace::transport::TimeGrid;

fn main() -> loopspace::Result<()> {
    let grid = TimeGrid::new(1024)?;
    let cfg = BridgeConfig::new(ManifoldModel::sphere2(), grid, 0.005, 42)?;
    let sampler = BridgeSampler::new(cfg.clone())?;
    let n = 4000;
    let samples = par_samples(n, |id| sampler.sample(id));
    let samples: Vec<_> = samples.into_iter().collect::<loopspace::Result<_>>()?;

    let half = grid.index_of(0.5)?;
    let summary: Vec<f64> = samples.iter().map(|s| MarginalOracle::summary(&cfg, s.path.at(half))).collect();
    let oracle = MarginalOracle::new(&cfg, 0.5)?;
    let ks = ks_test(&summary, |y| oracle.cdf(y));
    println!("time-1/2 marginal: KS statistic {:.4}, p = {:.3}", ks.statistic, ks.p_value);

    let end_gap = samples
        .iter()
        .map(|s| cfg.model().dist_raw(s.path.at(grid.steps()), cfg.m0().coords()))
        .fold(0.0, f64::max);
    let rejections: usize = samples.iter().map(|s| s.rejections).sum();
    println!("largest endpoint gap {end_gap:.2e}, injectivity rejections {rejections}");

    let path = std::env::temp_dir().join("loopspace_bridge_samples.csv");
    let first: Vec<(u64, &_)> = samples.iter().take(3).enumerate().map(|(i, s)| (i as u64, s)).collect();
    write_samples_file(&path, &first)?;
    println!("wrote 3 loops to {}", path.display());
    Ok(())
}
