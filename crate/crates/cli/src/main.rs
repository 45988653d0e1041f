//! `ecogrid` command-line front end.

mod commands;
mod output;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::output::Output;

#[derive(Debug, Parser)]
#[command(name = "ecogrid", version, about = "Ecological-robustness network expansion and assessment")]
struct Cli {
    /// Seed for every random choice; recorded in each output header.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Format of summary reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Choose candidate branches that maximize relaxed R_ECO.
    Optimize(commands::optimize::Args),
    /// Robustness, graph and flow metrics for one or more cases.
    Analyze(commands::analyze::Args),
    /// N-1/N-2/N-3 violation screening.
    Contingency(commands::contingency::Args),
    /// Generate a candidate branch file.
    Candidates(commands::candidates::Args),
    /// R_ECO against the number of added links.
    Explore(commands::explore::Args),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ECOGRID_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        anyhow::ensure!(jobs > 0, "--jobs must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let mut out = Output::new(&cli.out, cli.seed, cli.format)?;
    match cli.command {
        Command::Optimize(args) => commands::optimize::run(&args, &mut out)?,
        Command::Analyze(args) => commands::analyze::run(&args, &mut out)?,
        Command::Contingency(args) => commands::contingency::run(&args, &mut out)?,
        Command::Candidates(args) => commands::candidates::run(&args, &mut out)?,
        Command::Explore(args) => commands::explore::run(&args, &mut out)?,
    }
    out.finish()
}
