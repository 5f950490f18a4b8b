use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use magspec_cli::{cmd_ablate, cmd_run, cmd_sweep, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "magspec", version, about = "Magnetic spectral multi-view clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Added to every configured seed.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Train each seed and report clustering metrics.
    Run(Common),
    /// Compare phase operators on a fixed magnitude backbone.
    Ablate(Common),
    /// Grid over the geometry and spectral loss weights.
    Sweep(Common),
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let (Command::Run(c) | Command::Ablate(c) | Command::Sweep(c)) = &cli.command;
    let cfg = RunConfig::load(&c.config)?;
    match &cli.command {
        Command::Run(c) => {
            let report = cmd_run(&cfg, &c.out, c.seed_offset)?;
            if let Some(acc) = report.mean.acc {
                println!("mean acc {acc:.4}");
            }
        }
        Command::Ablate(c) => {
            cmd_ablate(&cfg, &c.out, c.seed_offset)?;
        }
        Command::Sweep(c) => {
            cmd_sweep(&cfg, &c.out, c.seed_offset)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { magspec_cli::EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
