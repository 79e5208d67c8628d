use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use parahedge::config::{Experiment, RunConfig};
use parahedge::runner::{apply_overrides, kernel_dump, run_config};

#[derive(Parser)]
#[command(name = "parahedge", version, about = "Semi-static hedging of barrier options via kernel symmetrization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and the CSV artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Hedge order.
    #[arg(long)]
    order: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Model, kernel, bound and identity checks.
    Verify(RunArgs),
    /// Knock-out, knock-in and plain prices.
    Price(RunArgs),
    /// Hedge ledger and liquidation payoffs.
    Hedge(RunArgs),
    /// Residual decay against the convergence margin.
    Convergence(RunArgs),
    /// Constants table and the envelope checks.
    Bounds(RunArgs),
    /// Writes p, h0 and h along a line normal to the barrier.
    KernelDump {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "kernel_dump.csv")]
        out: PathBuf,
    },
}

fn execute(experiment: Experiment, args: RunArgs) -> anyhow::Result<i32> {
    let mut cfg = RunConfig::from_path(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    apply_overrides(&mut cfg, Some(experiment), args.seed, args.paths, args.order)?;
    let rep = run_config(cfg, &args.out)?;
    if experiment == Experiment::Bounds {
        print!("{}", std::fs::read_to_string(args.out.join("bounds.txt"))?);
    } else {
        for r in &rep.records {
            println!("{:<28} {:?}", r.name, r.status);
        }
    }
    Ok(rep.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Verify(a) => execute(Experiment::Verify, a),
        Command::Price(a) => execute(Experiment::Price, a),
        Command::Hedge(a) => execute(Experiment::Hedge, a),
        Command::Convergence(a) => execute(Experiment::Convergence, a),
        Command::Bounds(a) => execute(Experiment::Bounds, a),
        Command::KernelDump { config, out } => {
            RunConfig::from_path(&config).and_then(|c| kernel_dump(&c, &out)).map(|_| 0).map_err(Into::into)
        }
    };
    match res {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
