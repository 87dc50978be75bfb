use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rekd_core::harness::{run_experiment, Overrides, RunMode};

/// Desk-scale relation-distillation experiments.
#[derive(Parser, Debug)]
#[command(name = "rekd-lab", version, about)]
struct Cli {
    /// What to run: rekd | nce | supmoco | bounds | kmeans-demo
    mode: RunMode,
    /// Path to the JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Target label purity for supmoco mode, in (0,1].
    #[arg(long)]
    purity: Option<f64>,
    /// Cap on true positives per anchor for supmoco mode.
    #[arg(long = "tpn-cap")]
    tpn_cap: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        purity: cli.purity,
        tpn_cap: cli.tpn_cap,
    };
    match run_experiment(&cli.config, &cli.out, cli.mode, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
