use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trainspeed::cli::{
    cmd_budget, cmd_diffnas, cmd_gen_toy, cmd_rankeval, cmd_report, cmd_search, CommonArgs,
};

#[derive(Parser)]
#[command(name = "trainspeed", version, about = "Training-speed generalisation estimators for architecture search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file ("schema": 1)
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts and the run manifest
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<usize>,
    /// Also emit SVG charts
    #[arg(long)]
    svg: bool,
}

impl From<Common> for CommonArgs {
    fn from(c: Common) -> CommonArgs {
        CommonArgs {
            config: c.config,
            out: c.out,
            seed: c.seed,
            jobs: c.jobs,
            svg: c.svg,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the toy MLP benchmark
    GenToy(Common),
    /// Rank-correlation evaluation of estimators on a benchmark
    Rankeval(Common),
    /// Effective-training-budget estimation by subsampling
    Budget(Common),
    /// Compare search strategies under simulated-runtime accounting
    Search(Common),
    /// Toy differentiable search driven by training speed
    Diffnas(Common),
    /// Re-render an emitted CSV report as an SVG chart
    Report(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenToy(c) => cmd_gen_toy(&c.into()),
        Command::Rankeval(c) => cmd_rankeval(&c.into()),
        Command::Budget(c) => cmd_budget(&c.into()),
        Command::Search(c) => cmd_search(&c.into()),
        Command::Diffnas(c) => cmd_diffnas(&c.into()),
        Command::Report(c) => cmd_report(&c.into()),
    };
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
