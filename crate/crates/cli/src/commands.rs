//! Subcommand bodies. Each returns the reports it produced; the caller maps them to exit codes.

use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use visco_pt_core::analysis::{
    check_energy_inequality, check_lin_energy_inequality, check_lin_semistability,
    check_monotonicity, check_semistability, density_convergence, epsilon_study, tau_convergence,
    ConvergenceScenario, EnergyFactor, VerificationReport,
};
use visco_pt_core::domain::{Mode, State};
use visco_pt_core::linearized::{lin_step_residual, run_linearized};
use visco_pt_core::stepper::run_evolution;
use visco_pt_core::TimeGrid;

use crate::config::ScenarioConfig;
use crate::output::{lin_csv, trajectory_csv, write_atomic};

/// Reports of one invocation; it passes when all of them do.
#[derive(Debug, Default)]
pub struct Outcome {
    pub reports: Vec<VerificationReport>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &VerificationReport> {
        self.reports.iter().filter(|r| !r.pass)
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

pub fn run(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let problem = cfg.problem();
    let traj = run_evolution(&cfg.initial_state()?, cfg.grid(), &problem)?;
    write_atomic(
        &out.join("trajectory.csv"),
        &trajectory_csv(&traj, &problem)?,
    )?;
    let report = check_energy_inequality(&traj, &problem, EnergyFactor::One)?;
    Ok(Outcome {
        reports: vec![report],
    })
}

pub fn sweep_tau(cfg: &ScenarioConfig, tau_list: &[f64], out: &Path) -> Result<Outcome> {
    let problem = cfg.problem();
    let initial = cfg.initial_state()?;
    tau_list
        .par_iter()
        .enumerate()
        .try_for_each(|(k, &tau)| -> Result<()> {
            let grid = TimeGrid::with_step(cfg.t_final, tau)?;
            let traj = run_evolution(&initial, grid, &problem)?;
            write_atomic(
                &out.join(format!("trajectory_tau_{k}.csv")),
                &trajectory_csv(&traj, &problem)?,
            )?;
            Ok(())
        })?;
    let scenario = cfg.scenario()?;
    let report = tau_convergence(ConvergenceScenario::OdeRk4(&scenario), tau_list)
        .context("the tau sweep compares against the zero-load material-point ODE")?;
    write_atomic(&out.join("sweep_tau.json"), &to_json(&report))?;
    Ok(Outcome {
        reports: vec![report],
    })
}

pub fn sweep_eps(cfg: &ScenarioConfig, eps_list: &[f64], out: &Path) -> Result<Outcome> {
    let report = epsilon_study(&cfg.eps_scenario()?, eps_list, cfg.checks.fine_tau)?;
    write_atomic(&out.join("sweep_eps.json"), &to_json(&report))?;
    Ok(Outcome {
        reports: vec![report],
    })
}

pub fn lin(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let problem = cfg.lin_problem()?;
    let grid = cfg.grid();
    let traj = run_linearized(&cfg.lin_initial()?, grid, &problem)?;
    write_atomic(&out.join("lin.csv"), &lin_csv(&traj, &problem))?;
    let tau = grid.tau();
    let residuals = (1..=grid.n_steps)
        .map(|i| {
            -lin_step_residual(
                grid.time(i),
                &traj.states[i - 1],
                &traj.states[i],
                tau,
                &problem,
            )
        })
        .collect();
    let step = VerificationReport::new(
        "lin_step_residual",
        residuals,
        visco_pt_core::analysis::LIN_RESIDUAL_TOL,
    );
    Ok(Outcome {
        reports: vec![
            step,
            check_lin_energy_inequality(&traj.states, grid, &problem),
            check_lin_semistability(&traj.states, grid, &problem),
        ],
    })
}

pub fn densities(cfg: &ScenarioConfig, eps_list: &[f64], out: &Path) -> Result<Outcome> {
    let report = density_convergence(&cfg.model, eps_list, &cfg.density_grid())?;
    let gaps = &report.params["gaps"];
    let mut csv = String::from("eps,elastic,viscous,dissipation,max\n");
    for (k, eps) in eps_list.iter().enumerate() {
        let at = |name: &str| gaps[name][k].as_f64().unwrap_or(f64::NAN);
        let max = report.params["max_gaps"][k].as_f64().unwrap_or(f64::NAN);
        csv.push_str(&format!(
            "{eps:.16e},{:.16e},{:.16e},{:.16e},{max:.16e}\n",
            at("elastic"),
            at("viscous"),
            at("dissipation")
        ));
    }
    write_atomic(&out.join("densities.csv"), &csv)?;
    write_atomic(&out.join("densities.json"), &to_json(&report))?;
    Ok(Outcome {
        reports: vec![report],
    })
}

/// Grid indices probed for semistability: every `every`-th computed state and the last one.
fn probe_indices(n_steps: usize, every: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (every..=n_steps).step_by(every).collect();
    if idx.last() != Some(&n_steps) {
        idx.push(n_steps);
    }
    idx
}

pub fn verify(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let c = &cfg.checks;
    let problem = cfg.problem();
    let initial = cfg.initial_state()?;
    let traj = run_evolution(&initial, cfg.grid(), &problem)?;
    let mut reports = Vec::new();
    if c.energy {
        reports.push(check_energy_inequality(&traj, &problem, EnergyFactor::One)?);
    }
    if c.sharp {
        reports.push(check_energy_inequality(
            &traj,
            &problem,
            EnergyFactor::PPsi { m: c.sharp_m },
        )?);
    }
    if c.semistability {
        let idx = probe_indices(cfg.n_steps, c.probe_every);
        reports.push(check_semistability(
            &traj,
            &idx,
            &problem,
            c.probes,
            &c.amplitudes,
            cfg.seed,
        )?);
    }
    if c.monotonicity {
        reports.push(check_monotonicity(
            &initial,
            0.0,
            &c.monotonicity_tau_list,
            &problem,
        )?);
    }
    if c.convergence {
        let scenario = cfg.scenario()?;
        if matches!(initial, State::MaterialPoint { .. }) && problem.loading.is_zero() {
            reports.push(tau_convergence(
                ConvergenceScenario::OdeRk4(&scenario),
                &c.tau_list,
            )?);
        }
        if cfg.mode == Mode::MaterialPoint && cfg.loading.is_zero() {
            let lin = cfg.lin_scenario()?;
            reports.push(tau_convergence(
                ConvergenceScenario::ClosedFormLin(&lin),
                &c.tau_list,
            )?);
        }
    }
    if c.linearized {
        reports.extend(lin(cfg, out)?.reports);
    }
    if c.epsilon {
        reports.push(epsilon_study(
            &cfg.eps_scenario()?,
            &c.eps_list,
            c.fine_tau,
        )?);
    }
    if c.density {
        reports.push(density_convergence(
            &cfg.model,
            &c.eps_list,
            &cfg.density_grid(),
        )?);
    }
    write_atomic(&out.join("verify.json"), &to_json(&reports))?;
    Ok(Outcome { reports })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_indices_cover_the_end() {
        assert_eq!(probe_indices(30, 10), vec![10, 20, 30]);
        assert_eq!(probe_indices(25, 10), vec![10, 20, 25]);
        assert_eq!(probe_indices(5, 10), vec![5]);
    }
}
