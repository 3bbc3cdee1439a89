use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use car_core::harness::{cmd_eval, cmd_plot, cmd_train, load_config};
use car_core::Result;

#[derive(Parser)]
#[command(name = "car", version, about = "Constraint-composed RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed, or every seed in the config when --seed is omitted.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a run's checkpoint with the deterministic policy.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
    /// Plot one metric across runs, grouped by algorithm.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        metric: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed } => {
            let cfg = load_config(&config)?;
            let seeds = seed.map(|s| vec![s]).unwrap_or_else(|| cfg.seeds.clone());
            for s in seeds {
                let dir = cmd_train(&cfg, s)?;
                println!("{}", dir.display());
            }
        }
        Command::Eval { run, episodes } => {
            println!("{}", cmd_eval(&run, episodes)?.display());
        }
        Command::Plot { runs, metric, out } => {
            let (svg, table) = cmd_plot(&runs, &metric, &out)?;
            println!("{}\n{}", svg.display(), table.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
