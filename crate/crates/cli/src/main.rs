//! `pathcopula`: configuration-driven batch runs with reproducible seeding.

mod commands;
mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use config::RunConfig;
use error::CliError;
use output::Outputs;

#[derive(Parser)]
#[command(name = "pathcopula", version, about = "Copula processes, path-space transport and robustness bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a copula process, optionally merged with marginals
    Simulate(Common),
    /// Path-space Wasserstein distance between two marginal families
    Wasserstein(Common),
    /// Robustness inequality: the Pareto/elliptical experiment or a simulated pair
    Robustness(Common),
    /// Karhunen–Loève expansion and truncation errors
    Klexpand(Common),
    /// Moment condition and density minorant checks
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (speed only, never results)
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
}

type Runner<C> = fn(&C, &Path, &mut Outputs) -> Result<(), CliError>;
type Inputs<C> = fn(&C, &Path) -> Vec<PathBuf>;

fn run<C: RunConfig>(name: &str, common: &Common, runner: Runner<C>, inputs: Inputs<C>) -> Result<PathBuf, CliError> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::config("--config", format!("{}: {e}", common.config.display())))?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| CliError::config("config", e))?;
    if name == "robustness" && raw.pointer("/mode/experiment/seed").is_some() {
        return Err(CliError::config("mode.experiment.seed", "set the seed at the top level or with --seed"));
    }
    let mut cfg: C = serde_json::from_str(&text).map_err(|e| CliError::config("config", e))?;
    if let Some(seed) = common.seed {
        *cfg.seed_mut() = seed;
    }
    let base = common.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = match (&common.out, cfg.output_dir()) {
        (Some(out), _) => out.clone(),
        (None, Some(dir)) => base.join(dir),
        (None, None) => return Err(CliError::config("output_dir", "not set; pass --out")),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| CliError::config("--threads", e))?;
    }

    let mut out = Outputs::new(&dir, cfg.format(), inputs(&cfg, &base));
    runner(&cfg, &base, &mut out)?;
    let seed = *cfg.seed_mut();
    let echo = serde_json::to_value(&cfg).expect("configs serialize");
    out.finish(name, &echo, seed)?;
    Ok(dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => run("simulate", c, commands::simulate, commands::simulate_inputs),
        Command::Wasserstein(c) => run("wasserstein", c, commands::wasserstein, commands::wasserstein_inputs),
        Command::Robustness(c) => run("robustness", c, commands::robustness, commands::robustness_inputs),
        Command::Klexpand(c) => run("klexpand", c, commands::klexpand, commands::klexpand_inputs),
        Command::Check(c) => run("check", c, commands::check, commands::check_inputs),
    };
    match result {
        Ok(dir) => {
            println!("wrote {}", dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
