//! Incremental minimization in time.
//!
//! Step `i` minimizes `E(t_i, y) + tau Psi(y_vi^{i-1}, (y_vi - y_vi^{i-1}) / tau)`
//! from the warm start `y^{i-1}`. The same sub-problem with `tau` replaced by
//! a sub-step `r` gives the minimal incremental energy `phi_r` and the De
//! Giorgi variational interpolant.

use serde::Serialize;

use crate::domain::{
    self, dissipation_increment, dissipation_increment_with_grad, reduce_gradient,
    shear_quadratic_system, total_energy, ShearQuadratic, State,
};
use crate::error::{Error, Result};
use crate::minimize::{minimize_smooth, solve_quadratic, MinimizeSettings};
use crate::rheology::MaterialModel;

/// Slack allowed on the stay-put inequality `E(new) + tau Psi <= E(prev)`.
pub const STAY_PUT_TOL: f64 = 1e-8;

/// Uniform partition of `[0, T]` into `N` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidInput(
                "time grid needs at least one step".into(),
            ));
        }
        Ok(TimeGrid { t_final, n_steps })
    }

    /// Grid of step `tau` on `[0, T]`; `T / tau` must be an integer up to rounding.
    pub fn with_step(t_final: f64, tau: f64) -> Result<Self> {
        let n = (t_final / tau).round();
        if !(tau > 0.0) || n < 1.0 || ((n * tau - t_final) / t_final).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "step {tau} does not divide the horizon {t_final}"
            )));
        }
        TimeGrid::new(t_final, n as usize)
    }

    pub fn tau(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t_final * i as f64 / self.n_steps as f64
    }
}

/// Everything an incremental problem needs besides the states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Problem {
    pub model: MaterialModel,
    pub loading: domain::Loading,
    pub settings: MinimizeSettings,
}

impl Problem {
    pub fn new(model: MaterialModel, loading: domain::Loading) -> Self {
        Problem {
            model,
            loading,
            settings: MinimizeSettings::default(),
        }
    }

    pub fn energy(&self, t: f64, state: &State) -> Result<f64> {
        Ok(total_energy(t, state, &self.model, &self.loading)?.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Direct factorization of a quadratic objective.
    Quadratic,
    /// Line-search minimization.
    Smooth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    /// `E(t_i, y^{i-1})`
    pub energy_before: f64,
    /// `E(t_i, y^i)`
    pub energy_after: f64,
    pub diss_increment: f64,
    pub iterations: usize,
    /// Exit gradient sup-norm in the minimizer's coordinates (viscous part rescaled).
    pub grad_norm: f64,
    pub route: Route,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<State>,
    pub diss_increments: Vec<f64>,
    /// Cumulative dissipation `delta(t_i)`, `delta[0] = 0`.
    pub delta: Vec<f64>,
    pub step_reports: Vec<StepReport>,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }
}

/// Minimizer of one incremental functional.
#[derive(Debug, Clone)]
struct Increment {
    state: State,
    energy: f64,
    diss: f64,
    iterations: usize,
    grad_norm: f64,
    route: Route,
}

fn minimize_increment(t: f64, old: &State, r: f64, problem: &Problem) -> Result<Increment> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sub-step must be positive, got {r}"
        )));
    }
    let model = &problem.model;
    let loading = &problem.loading;
    let (state, iterations, grad_norm, route) = match old {
        State::ShearColumn { beta, .. } if model.is_quadratic() => {
            let mesh = old.mesh().expect("shear state has a mesh");
            let q = ShearQuadratic {
                c_el: model.c_e,
                c_vi: model.c_v,
                d: model.d_v,
                tau: r,
            };
            let (hess, rhs) = shear_quadratic_system(
                &mesh,
                q,
                &domain::slopes(beta),
                loading.f.eval(t),
                loading.g.eval(t),
            );
            let x = solve_quadratic(&hess, &rhs)?;
            (old.from_reduced(&x), 1, 0.0, Route::Quadratic)
        }
        _ => {
            // viscous coordinates carry the 1/r curvature of the dissipation; rescale
            // them so the elastic and viscous blocks are comparably conditioned
            let n_el = old.n_elastic_reduced();
            let s = (model.c_e / (model.c_e + model.c_v + model.d_v / r)).sqrt();
            let scale = |mut v: Vec<f64>, factor: f64| {
                v[n_el..].iter_mut().for_each(|x| *x *= factor);
                v
            };
            let x0 = old.reduced();
            let shifted = |z: &[f64]| -> Vec<f64> {
                x0.iter()
                    .zip(scale(z.to_vec(), s))
                    .map(|(a, b)| a + b)
                    .collect()
            };
            let objective = |z: &[f64]| {
                let trial = old.from_reduced_raw(&shifted(z));
                let (e, ge) = total_energy(t, &trial, model, loading)?;
                let (d, gd) = dissipation_increment_with_grad(old, &trial, r, model);
                let full: Vec<f64> = ge.iter().zip(&gd).map(|(a, b)| a + b).collect();
                Ok((e + d, scale(reduce_gradient(&trial, &full), s)))
            };
            let min = minimize_smooth(objective, &vec![0.0; x0.len()], &problem.settings)?;
            (
                old.from_reduced(&shifted(&min.x)),
                min.diagnostics.iterations,
                min.diagnostics.grad_norm,
                Route::Smooth,
            )
        }
    };
    let energy = problem.energy(t, &state)?;
    let diss = dissipation_increment(old, &state, r, model);
    Ok(Increment {
        state,
        energy,
        diss,
        iterations,
        grad_norm,
        route,
    })
}

/// One step of the scheme at time `t_i` from `prev`.
pub fn incremental_step(
    t_i: f64,
    prev: &State,
    tau: f64,
    problem: &Problem,
) -> Result<(State, StepReport)> {
    let energy_before = problem.energy(t_i, prev)?;
    let inc = minimize_increment(t_i, prev, tau, problem)?;
    let excess = inc.energy + inc.diss - energy_before;
    if excess > STAY_PUT_TOL {
        return Err(Error::StepRejected { excess });
    }
    let report = StepReport {
        energy_before,
        energy_after: inc.energy,
        diss_increment: inc.diss,
        iterations: inc.iterations,
        grad_norm: inc.grad_norm,
        route: inc.route,
    };
    Ok((inc.state, report))
}

/// Runs all `N` steps with warm starts.
pub fn run_evolution(initial: &State, grid: TimeGrid, problem: &Problem) -> Result<Trajectory> {
    initial.validate()?;
    problem.model.validate()?;
    let e0 = problem.energy(0.0, initial)?;
    if !e0.is_finite() {
        return Err(Error::InvalidInput(
            "initial state has infinite energy".into(),
        ));
    }
    let tau = grid.tau();
    let mut states = Vec::with_capacity(grid.n_steps + 1);
    let mut diss_increments = Vec::with_capacity(grid.n_steps);
    let mut delta = Vec::with_capacity(grid.n_steps + 1);
    let mut step_reports = Vec::with_capacity(grid.n_steps);
    states.push(initial.clone());
    delta.push(0.0);
    for i in 1..=grid.n_steps {
        let (next, report) =
            incremental_step(grid.time(i), &states[i - 1], tau, problem).map_err(|e| {
                Error::StepFailed {
                    step: i,
                    source: Box::new(e),
                }
            })?;
        diss_increments.push(report.diss_increment);
        delta.push(delta[i - 1] + report.diss_increment);
        step_reports.push(report);
        states.push(next);
    }
    Ok(Trajectory {
        grid,
        states,
        diss_increments,
        delta,
        step_reports,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolantKind {
    /// Right-continuous, `u(t) = u_i` on `(t_{i-1}, t_i]`.
    Backward,
    /// Left-continuous, `u(t) = u_{i-1}` on `[t_{i-1}, t_i)`.
    Forward,
    /// Piecewise affine in the dofs.
    Affine,
}

/// Index `k` with `t = k tau`, snapped to the grid when within rounding.
fn grid_position(grid: &TimeGrid, t: f64) -> (f64, Option<usize>) {
    let k = t / grid.tau();
    let nearest = k.round();
    if (k - nearest).abs() <= 1e-9 {
        (nearest, Some(nearest as usize))
    } else {
        (k, None)
    }
}

pub fn interpolant(traj: &Trajectory, kind: InterpolantKind, t: f64) -> Result<State> {
    let grid = traj.grid;
    if !(t >= -1e-12 && t <= grid.t_final * (1.0 + 1e-12)) {
        return Err(Error::InvalidInput(format!(
            "time {t} outside [0, {}]",
            grid.t_final
        )));
    }
    let n = grid.n_steps;
    let (k, on_grid) = grid_position(&grid, t.max(0.0));
    let state = match kind {
        InterpolantKind::Backward => {
            let i = on_grid.unwrap_or_else(|| k.ceil() as usize).min(n);
            traj.states[i].clone()
        }
        InterpolantKind::Forward => {
            let i = on_grid.unwrap_or_else(|| k.floor() as usize).min(n);
            traj.states[i].clone()
        }
        InterpolantKind::Affine => match on_grid {
            Some(i) => traj.states[i.min(n)].clone(),
            None => {
                let i = (k.ceil() as usize).clamp(1, n);
                let lambda = k - (i - 1) as f64;
                let a = traj.states[i - 1].dofs();
                let b = traj.states[i].dofs();
                let mixed: Vec<f64> = a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| x + lambda * (y - x))
                    .collect();
                traj.states[i].with_dofs(&mixed)
            }
        },
    };
    Ok(state)
}

/// Minimal incremental energy `phi_r(old)` at time `t_i` and a minimizer.
pub fn phi_tau(t_i: f64, old: &State, r: f64, problem: &Problem) -> Result<(f64, State)> {
    let inc = minimize_increment(t_i, old, r, problem)?;
    Ok((inc.energy + inc.diss, inc.state))
}

/// De Giorgi variational interpolant at `t_{i-1} + r`.
pub fn de_giorgi_interpolant(
    traj: &Trajectory,
    i: usize,
    r: f64,
    problem: &Problem,
) -> Result<State> {
    if i == 0 || i > traj.grid.n_steps {
        return Err(Error::InvalidInput(format!(
            "step index {i} outside 1..={}",
            traj.grid.n_steps
        )));
    }
    let tau = traj.grid.tau();
    if !(r > 0.0 && r <= tau * (1.0 + 1e-12)) {
        return Err(Error::InvalidInput(format!(
            "sub-step {r} outside (0, {tau}]"
        )));
    }
    Ok(phi_tau(traj.grid.time(i), &traj.states[i - 1], r, problem)?.1)
}

/// Rate dissipation `Psi(old, (y_r - old) / r)` of the sub-step minimizer.
pub fn rate_dissipation(old: &State, y_r: &State, r: f64, model: &MaterialModel) -> f64 {
    dissipation_increment(old, y_r, r, model) / r
}

/// Minimizes `E(t, ., y_vi)` over the elastic part with the viscous part frozen.
pub fn relax_elastic(t: f64, state: &State, problem: &Problem) -> Result<State> {
    let x0 = state.reduced();
    let n_el = state.n_elastic_reduced();
    let frozen = x0[n_el..].to_vec();
    let objective = |xe: &[f64]| {
        let x: Vec<f64> = xe.iter().chain(&frozen).cloned().collect();
        let trial = state.from_reduced_raw(&x);
        let (e, g) = total_energy(t, &trial, &problem.model, &problem.loading)?;
        Ok((e, reduce_gradient(&trial, &g)[..n_el].to_vec()))
    };
    let min = minimize_smooth(objective, &x0[..n_el], &problem.settings)?;
    let x: Vec<f64> = min.x.iter().chain(&frozen).cloned().collect();
    Ok(state.from_reduced(&x))
}

/// `lim_{r -> 0} Psi(old, (y_r - old) / r)`.
///
/// As `r -> 0` the elastic part relaxes at frozen `old` and the viscous rate
/// `w` minimizes `<d_vi E, w> + Psi(old, w)`, the reduced energy slope plus
/// the rate dissipation.
pub fn limit_rate_dissipation(t_i: f64, old: &State, problem: &Problem) -> Result<f64> {
    let relaxed = relax_elastic(t_i, old, problem)?;
    let (_, g_full) = total_energy(t_i, &relaxed, &problem.model, &problem.loading)?;
    let x0 = relaxed.reduced();
    let n_el = relaxed.n_elastic_reduced();
    let slope = reduce_gradient(&relaxed, &g_full)[n_el..].to_vec();
    let base = x0.clone();
    let objective = |w: &[f64]| {
        let x: Vec<f64> = base[..n_el]
            .iter()
            .cloned()
            .chain(base[n_el..].iter().zip(w).map(|(b, wi)| b + wi))
            .collect();
        let moved = relaxed.from_reduced_raw(&x);
        let (d, gd) = dissipation_increment_with_grad(&relaxed, &moved, 1.0, &problem.model);
        let lin: f64 = slope.iter().zip(w).map(|(a, b)| a * b).sum();
        Ok((
            lin + d,
            slope
                .iter()
                .zip(&reduce_gradient(&moved, &gd)[n_el..])
                .map(|(a, b)| a + b)
                .collect(),
        ))
    };
    let min = minimize_smooth(objective, &vec![0.0; slope.len()], &problem.settings)?;
    let x: Vec<f64> = base[..n_el]
        .iter()
        .cloned()
        .chain(base[n_el..].iter().zip(&min.x).map(|(b, wi)| b + wi))
        .collect();
    Ok(dissipation_increment(
        &relaxed,
        &relaxed.from_reduced_raw(&x),
        1.0,
        &problem.model,
    ))
}
