//! Configuration, result files and the command implementations behind the
//! `sfl-lab` binary.

pub mod commands;
pub mod config;
pub mod svg;

use std::path::PathBuf;

pub use commands::{cmd_estimate, cmd_optimize, cmd_simulate, cmd_sweep, write_trace_csv, SCHEMA_VERSION};
pub use config::{
    load_config, parse_config, read_constants, save_config, write_constants, ScenarioConfig, SweepSpec,
    SweepVar,
};

use crate::error::{Error, Result};

/// Applies `SFL_SEED` and `SFL_OUT` from the environment. These are the only
/// settings that can be overridden outside the config file.
pub fn apply_env_overrides(cfg: &mut ScenarioConfig) -> Result<()> {
    if let Ok(seed) = std::env::var("SFL_SEED") {
        cfg.seed = seed.trim().parse().map_err(|_| Error::config("SFL_SEED", "not an unsigned integer"))?;
    }
    if let Ok(out) = std::env::var("SFL_OUT") {
        cfg.output_dir = PathBuf::from(out);
    }
    Ok(())
}
