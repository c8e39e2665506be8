use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sfl_lab::io::{self, ScenarioConfig, SweepVar};
use sfl_lab::Result;

#[derive(Parser)]
#[command(name = "sfl-lab", version, about = "Split federated learning over UAV sensing links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Jointly optimise I, L_c, b and q_s.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Also search the full grid and report the gap.
        #[arg(long)]
        brute_force: bool,
    },
    /// Train and record a trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        svg: bool,
    },
    /// Vary one decision variable and record rounds and time to target.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        svg: bool,
        /// One of I, L_c, b, theta_s.
        #[arg(long)]
        var: Option<String>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        seeds: Option<u32>,
    },
    /// Estimate the bound constants from a probe run.
    EstimateConstants {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => io::load_config(path)?,
        None => ScenarioConfig::default(),
    };
    io::apply_env_overrides(&mut cfg)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Optimize { common, brute_force } => io::cmd_optimize(&load(&common)?, brute_force),
        Command::Simulate { common, svg } => io::cmd_simulate(&load(&common)?, svg),
        Command::Sweep { common, svg, var, values, seeds } => {
            let mut cfg = load(&common)?;
            if let Some(var) = var {
                cfg.sweep.variable = SweepVar::parse(&var)?;
            }
            if let Some(values) = values {
                cfg.sweep.values = values;
            }
            if let Some(seeds) = seeds {
                cfg.sweep.seeds = seeds;
            }
            cfg.validate()?;
            io::cmd_sweep(&cfg, svg)
        }
        Command::EstimateConstants { common } => io::cmd_estimate(&load(&common)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
