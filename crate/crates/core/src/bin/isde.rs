use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use isde::cli::{self, Command, RunOptions, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "isde",
    version,
    about = "Impulsive stochastic evolution equations: check, simulate, solve, optimise"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Well-posedness constants and coefficient audits.
    Check(Args),
    /// One path plus a Monte-Carlo ensemble.
    Simulate(Args),
    /// Picard iteration on a noise ensemble.
    Picard(Args),
    /// Projected SPSA search for a low-cost control.
    Optimize(Args),
    /// Check, simulate and optimise in one go (advection_diffusion preset by default).
    Example(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Scenario JSON file, or `preset:<name>` for a built-in scenario.
    #[arg(long, value_name = "FILE")]
    config: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, env = "ISDE_THREADS")]
    threads: Option<usize>,
}

fn load(config: Option<&str>, default: Option<&str>) -> anyhow::Result<ScenarioConfig> {
    let source = match (config, default) {
        (Some(c), _) => c.to_string(),
        (None, Some(name)) => format!("preset:{name}"),
        (None, None) => bail!("--config is required"),
    };
    match source.strip_prefix("preset:") {
        Some(name) => cli::preset(name)
            .with_context(|| format!("unknown preset `{name}` (available: {})", cli::PRESET_NAMES.join(", "))),
        None => Ok(cli::load_config(source.as_ref())?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args, default) = match cli.command {
        Cmd::Check(a) => (Command::Check, a, None),
        Cmd::Simulate(a) => (Command::Simulate, a, None),
        Cmd::Picard(a) => (Command::Picard, a, None),
        Cmd::Optimize(a) => (Command::Optimize, a, None),
        Cmd::Example(a) => (Command::Example, a, Some("advection_diffusion")),
    };
    let result = (|| -> anyhow::Result<Vec<PathBuf>> {
        let cfg = load(args.config.as_deref(), default)?;
        let opts = RunOptions {
            seed: args.seed,
            paths: args.paths,
            dt: args.dt,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads.unwrap_or(0))
            .build()?;
        pool.install(|| cli::run_subcommand(command, &cfg, &args.out, &opts))
    })();
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
