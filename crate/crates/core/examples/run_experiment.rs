//! Runs a named experiment from a TOML config and writes its report, the same
//! path the CLI takes.
//!
//! `cargo run --release --example run_experiment -- structural`

use loopspace::config::ExperimentConfig;
use loopspace::experiments::run_experiment;

fn main() -> loopspace::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "gradient-check".into());
    let cfg = ExperimentConfig::from_toml("seed = 11\nsamples = 20\n\n[grid]\nN = 256\n")?;
    let report = run_experiment(&name, &cfg)?;
    let dir = std::env::temp_dir().join(format!("loopspace_{name}"));
    report.write(&dir)?;
    print!("{}", report.summary());
    println!("passed: {}, written to {}", report.passed(), dir.display());
    Ok(())
}
