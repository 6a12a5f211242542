//! Monte Carlo estimates with stability flags, rate fits and tail slopes on
//! synthetic Gaussian data.

use loopspace::mc::{estimate_with, exp_moment, fit_rate, par_samples, sample_rng, tail_exponent, TailOptions};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> loopspace::Result<()> {
    let stat = estimate_with(100_000, 1, |rng| rng.sample::<f64, _>(StandardNormal))?;
    println!("E[Z] = {:.4} +- {:.4} [{}]", stat.mean, stat.ci_half_width, stat.stability);

    let z: Vec<f64> = par_samples(1_000_000, |id| sample_rng(2, id).sample(StandardNormal));
    for lambda in [0.25, 0.45, 1.0] {
        let m = exp_moment(&z, lambda, true)?;
        println!("E[exp({lambda} Z^2)] = {:.4e}, top-sample share {:.3} [{}]", m.mean, m.top_sample_share, m.stability);
    }
    let tail = tail_exponent(&z, &TailOptions::default())?;
    println!("tail slope {:.4} in [{:.4}, {:.4}] (exact -0.5)", tail.slope, tail.ci_lo, tail.ci_hi);

    let pts: Vec<(f64, f64)> = [0.5, 0.25, 0.125, 0.0625].iter().map(|&x: &f64| (x, 2.0 * x.sqrt())).collect();
    let fit = fit_rate(&pts)?;
    println!("rate fit: slope {:.4}, r2 {:.4}", fit.slope, fit.r2);
    Ok(())
}
