//! Scenario configuration and subcommand orchestration for the `visco-pt` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::Outcome;
pub use config::{parse_config, ConfigError, ScenarioConfig};

/// Environment variable capping the worker threads of sweeps.
pub const THREADS_ENV: &str = "VISCO_PT_THREADS";

/// Reads the thread cap from the environment; `None` when unset.
pub fn thread_cap() -> anyhow::Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(anyhow::anyhow!("{THREADS_ENV}: {e}")),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(anyhow::anyhow!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            )),
        },
    }
}
