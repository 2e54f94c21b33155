use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use schrodmix::config::{load_config, ExperimentKind};
use schrodmix::run::{exit_code, run_experiment};

/// Worker-count override; every other setting comes from the config file.
const WORKERS_ENV: &str = "SCHRODMIX_WORKERS";

#[derive(Parser)]
#[command(name = "schrodmix", version, about = "Run a damped stochastic NLS experiment")]
struct Cli {
    /// simulate, decay, gramian, stabilize, couple, mix, saturate or smooth.
    kind: ExperimentKind,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory of the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {WORKERS_ENV} must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    let result = load_config(&cli.config, Some(cli.kind)).and_then(|mut cfg| {
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        if let Some(out) = cli.out {
            cfg.output_dir = out;
        }
        run_experiment(&cfg)
    });
    match &result {
        Ok(m) => {
            println!("{} done: {} files in {}", m.kind, m.outputs.len() + 1, m.output_dir.display());
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
