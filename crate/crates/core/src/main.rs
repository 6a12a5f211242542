//! Experiment runner: `loopspace run <experiment> [options]`.
//!
//! Exit status 0 when every threshold check passes, 1 when one fails, 2 on
//! usage or configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use loopspace::config::{ExperimentConfig, ManifoldChoice};
use loopspace::experiments::{run_experiment, EXPERIMENTS};

#[derive(Parser)]
#[command(name = "loopspace", about = "Monte Carlo experiments on Brownian loops")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one named experiment and write results.csv, summary.txt and plots/.
    Run {
        experiment: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// `torus` or `sphere2`; both models run when omitted.
        #[arg(long)]
        manifold: Option<String>,
    },
    /// List experiment names.
    List,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::List => {
            for name in EXPERIMENTS {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            experiment,
            config,
            seed,
            samples,
            workers,
            out,
            manifold,
        } => {
            let mut cfg = match config {
                Some(path) => match ExperimentConfig::from_file(&path) {
                    Ok(cfg) => cfg,
                    Err(e) => return usage_error(&e.to_string()),
                },
                None => ExperimentConfig::default(),
            };
            if let Some(name) = &cfg.experiment {
                if name != &experiment {
                    return usage_error(&format!("config names experiment '{name}' but '{experiment}' was requested"));
                }
            }
            if !EXPERIMENTS.contains(&experiment.as_str()) {
                return usage_error(&format!(
                    "unknown experiment '{experiment}'; expected one of {}",
                    EXPERIMENTS.join(", ")
                ));
            }
            cfg.seed = seed.or(cfg.seed);
            cfg.samples = samples.or(cfg.samples);
            cfg.workers = workers.or(cfg.workers);
            cfg.out = out.or(cfg.out);
            if let Some(m) = manifold {
                match ManifoldChoice::parse(&m) {
                    Ok(choice) => cfg.manifold = Some(choice),
                    Err(e) => return usage_error(&e.to_string()),
                }
            }
            if let Err(e) = cfg.validate() {
                return usage_error(&e.to_string());
            }
            let threads = cfg.workers.unwrap_or(0);
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => pool,
                Err(e) => return usage_error(&e.to_string()),
            };
            let report = match pool.install(|| run_experiment(&experiment, &cfg)) {
                Ok(report) => report,
                Err(loopspace::Error::Config(msg)) => return usage_error(&msg),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("results").join(&experiment));
            if let Err(e) = report.write(&dir) {
                eprintln!("error: cannot write results to {}: {e}", dir.display());
                return ExitCode::from(2);
            }
            print!("{}", report.summary());
            println!("results written to {}", dir.display());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}
