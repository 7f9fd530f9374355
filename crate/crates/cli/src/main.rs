use std::path::PathBuf;
use std::process::ExitCode;

use cdfit_cli::{cmd_fit, cmd_simulate, cmd_sweep, cmd_verify, load_config, Overrides};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cdfit", version, about = "Contrastive-divergence fitting for ERGMs and binary pairwise models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one fit and write fit.csv.
    Fit(Common),
    /// Fit every point of a kernel grid and write sweep.csv.
    Sweep(Common),
    /// Run the exact-oracle verification suite.
    Verify(Common),
    /// Draw a synthetic network and write edge and attribute files.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Fit(c) | Command::Sweep(c) | Command::Verify(c) | Command::Simulate(c)) = &cli.command;
    let overrides = Overrides {
        seed: c.seed,
        out: c.out.clone(),
        jobs: c.jobs,
    };
    let run = || -> cdfit_cli::Result<bool> {
        let cfg = load_config(&c.config, &overrides)?;
        Ok(match cli.command {
            Command::Fit(_) => cmd_fit(&cfg).map(|_| true)?,
            Command::Sweep(_) => cmd_sweep(&cfg).map(|_| true)?,
            Command::Verify(_) => cmd_verify(&cfg)?.report.passed(),
            Command::Simulate(_) => cmd_simulate(&cfg).map(|_| true)?,
        })
    };
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
