use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phenolag_cli::{run, Command, Invocation};

/// Simulate and classify the lag process of a population tracking a moving optimum.
#[derive(Parser)]
#[command(name = "phenolag", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Write one trajectory CSV and event log per seed, plus a manifest.
    Simulate(Args),
    /// Classify the regime and write the report with its evidence.
    Classify(Args),
    /// Simulate an ensemble and write summary statistics.
    Ensemble(Args),
    /// Classify the scenario at each mean speed listed under [sweep].
    Sweep(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Scenario configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Number of seeds, overriding `run.seeds`.
    #[arg(long)]
    seeds: Option<u64>,
    /// Output directory; defaults to `outputs.directory`, then $PHENOLAG_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, args) = match cli.command {
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Classify(a) => (Command::Classify, a),
        Sub::Ensemble(a) => (Command::Ensemble, a),
        Sub::Sweep(a) => (Command::Sweep, a),
    };
    let inv = Invocation {
        command,
        config: args.config,
        seeds: args.seeds,
        out: args.out,
    };
    match run(&inv, &mut io::stdout().lock()) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
