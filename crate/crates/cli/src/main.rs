use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use visco_pt::{commands, parse_config, thread_cap, Outcome, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "visco-pt",
    version,
    about = "Incremental-minimization runs and checks for finite-strain Poynting-Thomson viscoelasticity"
)]
struct Cli {
    /// Scenario file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed for probe directions, overriding the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single trajectory with its energy ledger.
    Run,
    /// Trajectories over several time steps against the ODE oracle.
    SweepTau {
        #[arg(long, value_delimiter = ',')]
        tau_list: Option<Vec<f64>>,
    },
    /// Finite-strain runs with scaled data against the linearized run.
    SweepEps {
        #[arg(long, value_delimiter = ',')]
        eps_list: Option<Vec<f64>>,
    },
    /// Linearized run.
    Lin,
    /// All checks selected in the scenario, as one JSON report.
    Verify {
        #[arg(long, value_delimiter = ',')]
        tau_list: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        eps_list: Option<Vec<f64>>,
    },
    /// Convergence table of the rescaled densities.
    Densities {
        #[arg(long, value_delimiter = ',')]
        eps_list: Option<Vec<f64>>,
    },
}

fn load(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<Outcome> {
    if let Some(n) = thread_cap()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = load(cli)?;
    let out = &cli.out;
    match &cli.command {
        Command::Run => commands::run(&cfg, out),
        Command::SweepTau { tau_list } => {
            let list = tau_list
                .clone()
                .unwrap_or_else(|| cfg.checks.tau_list.clone());
            commands::sweep_tau(&cfg, &list, out)
        }
        Command::SweepEps { eps_list } => {
            let list = eps_list
                .clone()
                .unwrap_or_else(|| cfg.checks.eps_list.clone());
            commands::sweep_eps(&cfg, &list, out)
        }
        Command::Lin => commands::lin(&cfg, out),
        Command::Verify { tau_list, eps_list } => {
            if let Some(l) = tau_list {
                cfg.checks.tau_list = l.clone();
            }
            if let Some(l) = eps_list {
                cfg.checks.eps_list = l.clone();
            }
            cfg.validate()?;
            commands::verify(&cfg, out)
        }
        Command::Densities { eps_list } => {
            let list = eps_list
                .clone()
                .unwrap_or_else(|| cfg.checks.eps_list.clone());
            commands::densities(&cfg, &list, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => {
            for r in outcome.failures() {
                let worst = r.min_residual().unwrap_or(f64::NAN);
                eprintln!(
                    "check failed: {} (min residual {worst:e}, tolerance {:e})",
                    r.check, r.tolerance
                );
            }
            if outcome.pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
