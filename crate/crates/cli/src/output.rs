//! CSV ledgers and atomic file output.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use visco_pt_core::analysis::{check_energy_inequality, check_lin_energy_inequality, EnergyFactor};
use visco_pt_core::domain::{energy_parts, State};
use visco_pt_core::linearized::{
    lin_energy_parts, lin_load_work, LinProblem, LinState, LinTrajectory,
};
use visco_pt_core::{Problem, Result, Trajectory};

const COLUMNS: &str = "W_el,W_vi,load_work,E_total,diss_inc,delta,ineq_residual";

/// Writes through a sibling temporary file so readers never see partial output.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

fn num(out: &mut String, v: f64) {
    write!(out, ",{v:.16e}").expect("writing to a string");
}

fn dof_summary(state: &State) -> (f64, f64) {
    match state {
        State::MaterialPoint { f, f_vi } => (*f, *f_vi),
        State::ShearColumn { gamma, beta } => (gamma[gamma.len() - 1], beta[beta.len() - 1]),
    }
}

/// Ledger of a finite-strain run, one row per grid time.
pub fn trajectory_csv(traj: &Trajectory, problem: &Problem) -> Result<String> {
    let ineq = check_energy_inequality(traj, problem, EnergyFactor::One)?;
    let names = match traj.states[0] {
        State::MaterialPoint { .. } => "F,F_vi",
        State::ShearColumn { .. } => "gamma_top,beta_top",
    };
    let mut out = format!("t,{names},{COLUMNS}\n");
    for (i, state) in traj.states.iter().enumerate() {
        let t = traj.grid.time(i);
        let parts = energy_parts(t, state, &problem.model, &problem.loading)?;
        let (a, b) = dof_summary(state);
        write!(out, "{t:.16e}").expect("writing to a string");
        for v in [a, b, parts.w_el, parts.w_vi, parts.load_work, parts.total()] {
            num(&mut out, v);
        }
        num(
            &mut out,
            if i == 0 {
                0.0
            } else {
                traj.diss_increments[i - 1]
            },
        );
        num(&mut out, traj.delta[i]);
        num(&mut out, if i == 0 { 0.0 } else { ineq.residuals[i - 1] });
        out.push('\n');
    }
    Ok(out)
}

/// Ledger of a linearized run; the residual column uses the factor-2 inequality.
pub fn lin_csv(traj: &LinTrajectory, problem: &LinProblem) -> String {
    let ineq = check_lin_energy_inequality(&traj.states, traj.grid, problem);
    let names = match traj.states[0] {
        LinState::MaterialPoint { .. } => "u,v",
        LinState::ShearColumn { .. } => "u_top,v_top",
    };
    let mut out = format!("t,{names},{COLUMNS},lin\n");
    for (i, state) in traj.states.iter().enumerate() {
        let t = traj.grid.time(i);
        let (w_el, w_vi) = lin_energy_parts(state, &problem.quad);
        let work = lin_load_work(t, state, &problem.loading);
        let u = *state.displacement().last().expect("nonempty");
        let v = *state.viscous().last().expect("nonempty");
        write!(out, "{t:.16e}").expect("writing to a string");
        for x in [u, v, w_el, w_vi, work, w_el + w_vi - work] {
            num(&mut out, x);
        }
        num(
            &mut out,
            if i == 0 {
                0.0
            } else {
                traj.diss_increments[i - 1]
            },
        );
        num(&mut out, traj.delta[i]);
        num(&mut out, if i == 0 { 0.0 } else { ineq.residuals[i - 1] });
        out.push_str(",1\n");
    }
    out
}
