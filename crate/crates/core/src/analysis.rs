//! Verification harness: energy balances, semistability, monotonicity and convergence studies.
//!
//! Every residual is signed so that positive means the tested inequality
//! holds. A report passes when no residual is below `-tolerance`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::domain::{dissipation_increment, Mode, State};
use crate::error::{Error, Result};
use crate::linearized::{
    lin_dissipation_increment, lin_energy, lin_energy_parts, lin_equilibrium_residual,
    mp_lin_closed_form, rescale_displacements, rescaled_energies, run_linearized, LinProblem,
    LinState,
};
use crate::rheology::{quadratic_limit, rescaled_density, Densities, DensityKind, MaterialModel};
use crate::stepper::{
    limit_rate_dissipation, phi_tau, rate_dissipation, relax_elastic, run_evolution, Problem,
    TimeGrid, Trajectory,
};

pub const ENERGY_TOL: f64 = 1e-8;
pub const SEMISTABILITY_TOL: f64 = 1e-8;
pub const MONOTONICITY_TOL: f64 = 1e-9;
pub const LIN_RESIDUAL_TOL: f64 = 1e-10;
pub const LIN_ENERGY_TOL: f64 = 1e-9;
/// Largest RK4 step of the ODE oracle.
pub const RK4_MAX_STEP: f64 = 1e-4;
pub const MIN_TAU_ORDER: f64 = 0.9;
pub const MIN_DENSITY_RATE: f64 = 1.9;
pub const MIN_EPS_ERROR_RATE: f64 = 0.8;
/// Below this every ε-study error and gap is treated as solver noise.
pub const EPS_INDEPENDENT_TOL: f64 = 1e-7;
/// Initial energy-gap rate required of a material point, whose kinematics `F / F_vi` keep a first-order term.
pub const MIN_MP_GAP_RATE: f64 = 0.9;
/// Density gaps at or below this are rounding of exact quadratics.
pub const DENSITY_GAP_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub check: String,
    pub params: BTreeMap<String, Value>,
    pub residuals: Vec<f64>,
    pub rates: BTreeMap<String, f64>,
    pub pass: bool,
    pub tolerance: f64,
}

impl VerificationReport {
    pub fn new(check: &str, residuals: Vec<f64>, tolerance: f64) -> Self {
        let pass = residuals.iter().all(|&r| r >= -tolerance);
        VerificationReport {
            check: check.to_string(),
            params: BTreeMap::new(),
            residuals,
            rates: BTreeMap::new(),
            pass,
            tolerance,
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Serialize) -> Self {
        self.params.insert(
            key.to_string(),
            serde_json::to_value(value).expect("plain data serializes"),
        );
        self
    }

    pub fn with_rate(mut self, key: &str, rate: f64) -> Self {
        self.rates.insert(key.to_string(), rate);
        self
    }

    pub fn min_residual(&self) -> Option<f64> {
        self.residuals.iter().cloned().reduce(f64::min)
    }
}

/// Least-squares slope of `log y` against `log x`; `None` unless all values are positive.
pub fn fitted_rate(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() || xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// A finite-strain scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub problem: Problem,
    pub initial: State,
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinScenario {
    pub problem: LinProblem,
    pub initial: LinState,
    pub t_final: f64,
}

/// Limit loading, limit initial data and the model whose ε-family is studied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsScenario {
    pub problem: Problem,
    pub initial: LinState,
    pub t_final: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyFactor {
    One,
    /// Sharp balance with De Giorgi sub-minimizations at `m` sub-steps.
    PPsi {
        m: usize,
    },
}

/// Chebyshev–Lobatto sub-step nodes on `[0, tau]`; those with even index form the `m / 2` set.
pub fn sub_step_nodes(tau: f64, m: usize) -> Vec<f64> {
    (0..=m)
        .map(|k| {
            if k == m {
                tau
            } else {
                0.5 * tau * (1.0 - (std::f64::consts::PI * k as f64 / m as f64).cos())
            }
        })
        .collect()
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// `E(0) - sum_i int <l', y^{i-1}>` for `n = 1..=N`.
fn energy_budget(traj: &Trajectory, problem: &Problem) -> Result<(f64, Vec<f64>)> {
    let e0 = problem.energy(0.0, &traj.states[0])?;
    let grid = traj.grid;
    let mut acc = e0;
    let mut out = Vec::with_capacity(grid.n_steps);
    for i in 1..=grid.n_steps {
        acc -= problem
            .loading
            .work_increment(grid.time(i - 1), grid.time(i), &traj.states[i - 1]);
        out.push(acc);
    }
    Ok((e0, out))
}

/// Discrete energy inequality with factor one or its sharp form with factor `p_psi`.
pub fn check_energy_inequality(
    traj: &Trajectory,
    problem: &Problem,
    factor: EnergyFactor,
) -> Result<VerificationReport> {
    let grid = traj.grid;
    let (e0, budget) = energy_budget(traj, problem)?;
    let mut energies = Vec::with_capacity(grid.n_steps);
    for i in 1..=grid.n_steps {
        energies.push(problem.energy(grid.time(i), &traj.states[i])?);
    }
    match factor {
        EnergyFactor::One => {
            let residuals: Vec<f64> = (0..grid.n_steps)
                .map(|k| budget[k] - (energies[k] + traj.delta[k + 1]))
                .collect();
            Ok(
                VerificationReport::new("energy_inequality", residuals, ENERGY_TOL)
                    .with_param("factor", "one")
                    .with_param("initial_energy", e0),
            )
        }
        EnergyFactor::PPsi { m } => {
            if m < 2 || m % 2 != 0 {
                return Err(Error::InvalidInput(format!(
                    "sub-grid size must be even and >= 2, got {m}"
                )));
            }
            let p = problem.model.p_psi;
            let tau = grid.tau();
            let nodes = sub_step_nodes(tau, m);
            let half: Vec<f64> = nodes.iter().step_by(2).cloned().collect();
            let mut integrals = Vec::with_capacity(grid.n_steps);
            let mut quad_err = 0.0;
            let mut relax_gaps = Vec::with_capacity(grid.n_steps);
            for i in 1..=grid.n_steps {
                let t = grid.time(i);
                let old = &traj.states[i - 1];
                let mut psi = Vec::with_capacity(m + 1);
                psi.push(limit_rate_dissipation(t, old, problem)?);
                for &r in &nodes[1..m] {
                    let (_, y) = phi_tau(t, old, r, problem)?;
                    psi.push(rate_dissipation(old, &y, r, &problem.model));
                }
                psi.push(rate_dissipation(old, &traj.states[i], tau, &problem.model));
                let full = trapezoid(&nodes, &psi);
                let coarse = trapezoid(&half, &psi.iter().step_by(2).cloned().collect::<Vec<_>>());
                quad_err += (p - 1.0) * (full - coarse).abs();
                integrals.push(full);
                let relaxed = relax_elastic(t, old, problem)?;
                relax_gaps.push((problem.energy(t, old)? - problem.energy(t, &relaxed)?).max(0.0));
            }
            let equality = traj.states[0].mode() == Mode::MaterialPoint
                && problem.loading.is_time_independent();
            let mut signed = Vec::with_capacity(grid.n_steps);
            let mut acc_int = 0.0;
            let mut acc_gap = 0.0;
            for k in 0..grid.n_steps {
                acc_int += integrals[k];
                acc_gap += relax_gaps[k];
                let lhs = energies[k] + traj.delta[k + 1] + (p - 1.0) * acc_int;
                signed.push(if equality {
                    budget[k] - acc_gap - lhs
                } else {
                    budget[k] - lhs
                });
            }
            let residuals: Vec<f64> = if equality {
                signed.iter().map(|r| -r.abs()).collect()
            } else {
                signed.clone()
            };
            let tolerance = 1e-3 * e0.abs() + ENERGY_TOL;
            Ok(
                VerificationReport::new("sharp_energy_identity", residuals, tolerance)
                    .with_param("factor", "p_psi")
                    .with_param("m", m)
                    .with_param("mode", if equality { "equality" } else { "inequality" })
                    .with_param("initial_energy", e0)
                    .with_param("final_residual", *signed.last().expect("at least one step"))
                    .with_param("quadrature_tolerance", quad_err),
            )
        }
    }
}

/// Unit-norm Gaussian directions, seeded.
pub fn probe_directions(dim: usize, n_probes: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_probes)
        .map(|_| {
            let mut d: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            d.iter_mut().for_each(|x| *x /= norm);
            d
        })
        .collect()
}

/// `E(t, y_el + h d, y_vi) - E(t, y_el, y_vi)` over probes and amplitudes at the given grid indices.
pub fn check_semistability(
    traj: &Trajectory,
    indices: &[usize],
    problem: &Problem,
    n_probes: usize,
    amplitudes: &[f64],
    seed: u64,
) -> Result<VerificationReport> {
    let mut residuals = Vec::with_capacity(indices.len() * n_probes * amplitudes.len());
    let first = &traj.states[0];
    let n_el = first.n_elastic_reduced();
    let probes = probe_directions(n_el, n_probes, seed);
    for &i in indices {
        if i > traj.grid.n_steps {
            return Err(Error::InvalidInput(format!(
                "grid index {i} beyond {}",
                traj.grid.n_steps
            )));
        }
        let t = traj.grid.time(i);
        let state = &traj.states[i];
        let base = problem.energy(t, state)?;
        let x = state.reduced();
        for d in &probes {
            for &h in amplitudes {
                let mut xp = x.clone();
                xp[..n_el].iter_mut().zip(d).for_each(|(a, b)| *a += h * b);
                let trial = state.from_reduced(&xp);
                residuals.push(problem.energy(t, &trial)? - base);
            }
        }
    }
    Ok(
        VerificationReport::new("semistability", residuals, SEMISTABILITY_TOL)
            .with_param("indices", indices)
            .with_param("n_probes", n_probes)
            .with_param("amplitudes", amplitudes)
            .with_param("seed", seed),
    )
}

/// Displacement dissipation `Psi(old, y_vi,tau - old)` must be nondecreasing in `tau`.
pub fn check_monotonicity(
    old: &State,
    t_i: f64,
    tau_list: &[f64],
    problem: &Problem,
) -> Result<VerificationReport> {
    if tau_list.iter().any(|&t| !(t > 0.0)) || tau_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(
            "step list must be positive and ascending".into(),
        ));
    }
    let values = tau_list
        .par_iter()
        .map(|&tau| {
            let (_, y) = phi_tau(t_i, old, tau, problem)?;
            Ok(dissipation_increment(old, &y, 1.0, &problem.model))
        })
        .collect::<Result<Vec<f64>>>()?;
    let residuals = values.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(
        VerificationReport::new("dissipation_monotonicity", residuals, MONOTONICITY_TOL)
            .with_param("tau_list", tau_list)
            .with_param("values", values),
    )
}

/// Factor-`2` energy inequality of a linearized run.
pub fn check_lin_energy_inequality(
    states: &[LinState],
    grid: TimeGrid,
    problem: &LinProblem,
) -> VerificationReport {
    let tau = grid.tau();
    let mut acc = lin_energy(0.0, &states[0], problem).0;
    let mut diss = 0.0;
    let mut residuals = Vec::with_capacity(grid.n_steps);
    for i in 1..=grid.n_steps {
        let prev = &states[i - 1];
        acc += lin_energy(grid.time(i), prev, problem).0
            - lin_energy(grid.time(i - 1), prev, problem).0;
        diss += lin_dissipation_increment(prev, &states[i], tau, &problem.quad).0;
        residuals.push(acc - (lin_energy(grid.time(i), &states[i], problem).0 + 2.0 * diss));
    }
    VerificationReport::new("lin_energy_inequality", residuals, LIN_ENERGY_TOL)
}

/// Elastic equilibrium residuals of a linearized run, negated.
pub fn check_lin_semistability(
    states: &[LinState],
    grid: TimeGrid,
    problem: &LinProblem,
) -> VerificationReport {
    let residuals = states
        .iter()
        .enumerate()
        .map(|(i, s)| -lin_equilibrium_residual(grid.time(i), s, problem))
        .skip(1)
        .collect();
    VerificationReport::new("lin_semistability", residuals, LIN_RESIDUAL_TOL)
}

fn rk4_step(f: f64, k: f64, h: f64) -> f64 {
    let rhs = |x: f64| -k * x * x * (x - 1.0);
    let k1 = rhs(f);
    let k2 = rhs(f + 0.5 * h * k1);
    let k3 = rhs(f + 0.5 * h * k2);
    let k4 = rhs(f + h * k3);
    f + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// `ln|F - 1| - ln F + 1/F + k t`, constant along `F' = -k F^2 (F - 1)`.
pub fn ode_invariant(f: f64, k: f64, t: f64) -> f64 {
    (f - 1.0).abs().ln() - f.ln() + 1.0 / f + k * t
}

/// RK4 solution of `F' = -k F^2 (F - 1)` at the grid times, sub-steps `<= RK4_MAX_STEP`.
pub fn ode_oracle(f0: f64, k: f64, grid: TimeGrid) -> Result<Vec<f64>> {
    if !(f0 > 0.0) {
        return Err(Error::OracleNotApplicable(format!(
            "initial value {f0} must be positive"
        )));
    }
    let tau = grid.tau();
    let sub = (tau / RK4_MAX_STEP - 1e-9).ceil().max(1.0) as usize;
    let h = tau / sub as f64;
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    let mut f = f0;
    out.push(f);
    for _ in 0..grid.n_steps {
        for _ in 0..sub {
            f = rk4_step(f, k, h);
        }
        out.push(f);
    }
    if f0 != 1.0 {
        let c0 = ode_invariant(f0, k, 0.0);
        let drift = out
            .iter()
            .enumerate()
            .map(|(i, &fi)| (ode_invariant(fi, k, grid.time(i)) - c0).abs())
            .fold(0.0, f64::max);
        if !(drift <= 1e-8) {
            return Err(Error::OracleNotApplicable(format!(
                "RK4 drifts from the implicit solution by {drift:e}"
            )));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub enum ConvergenceScenario<'a> {
    /// Zero-load material point with `p_psi = 2` against the limit ODE.
    OdeRk4(&'a Scenario),
    /// Zero-load linearized material point against the exponential.
    ClosedFormLin(&'a LinScenario),
}

/// Sup-over-grid errors per `tau` against the oracle and the fitted order.
pub fn tau_convergence(
    scenario: ConvergenceScenario<'_>,
    tau_list: &[f64],
) -> Result<VerificationReport> {
    let (oracle_name, errors) = match scenario {
        ConvergenceScenario::OdeRk4(s) => {
            let State::MaterialPoint { f_vi, .. } = s.initial else {
                return Err(Error::OracleNotApplicable(
                    "ODE oracle needs a material point".into(),
                ));
            };
            let m = &s.problem.model;
            if !s.problem.loading.is_zero() || m.p_psi != 2.0 {
                return Err(Error::OracleNotApplicable(
                    "ODE oracle needs zero load and p_psi = 2".into(),
                ));
            }
            let k = m.c_v / m.d_v;
            let errors = tau_list
                .par_iter()
                .map(|&tau| {
                    let grid = TimeGrid::with_step(s.t_final, tau)?;
                    let oracle = ode_oracle(f_vi, k, grid)?;
                    let traj = run_evolution(&s.initial, grid, &s.problem)?;
                    let computed: Vec<f64> = traj
                        .states
                        .iter()
                        .map(|st| st.viscous_strain()[0] + 1.0)
                        .collect();
                    Ok(sup_diff(&computed, &oracle))
                })
                .collect::<Result<Vec<f64>>>()?;
            ("ode_rk4", errors)
        }
        ConvergenceScenario::ClosedFormLin(s) => {
            let LinState::MaterialPoint { v: v0, .. } = s.initial else {
                return Err(Error::OracleNotApplicable(
                    "closed form needs a material point".into(),
                ));
            };
            if !s.problem.loading.is_zero() {
                return Err(Error::OracleNotApplicable(
                    "closed form needs zero load".into(),
                ));
            }
            let errors = tau_list
                .par_iter()
                .map(|&tau| {
                    let grid = TimeGrid::with_step(s.t_final, tau)?;
                    let traj = run_linearized(&s.initial, grid, &s.problem)?;
                    let err = traj
                        .states
                        .iter()
                        .enumerate()
                        .map(|(i, st)| {
                            (st.viscous()[0]
                                - mp_lin_closed_form(v0, &s.problem.quad, grid.time(i)).1)
                                .abs()
                        })
                        .fold(0.0, f64::max);
                    Ok(err)
                })
                .collect::<Result<Vec<f64>>>()?;
            ("closed_form_lin", errors)
        }
    };
    let mut report;
    if sup(&errors) <= 1e-14 {
        report = VerificationReport::new("tau_convergence", vec![0.0], 0.0);
    } else {
        let rate = if tau_list.len() >= 3 {
            fitted_rate(tau_list, &errors)
        } else {
            None
        };
        let residuals = match rate {
            Some(r) => vec![r - MIN_TAU_ORDER],
            None if tau_list.len() >= 3 => vec![f64::NEG_INFINITY],
            None => vec![],
        };
        report = VerificationReport::new("tau_convergence", residuals, 0.0);
        if let Some(r) = rate {
            report = report.with_rate("order", r);
        }
    }
    Ok(report
        .with_param("oracle", oracle_name)
        .with_param("tau_list", tau_list)
        .with_param("errors", errors))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsPoint {
    pub eps: f64,
    pub u_error: f64,
    pub v_error: f64,
    pub gap_initial: f64,
    pub gap_final: f64,
}

fn stored_rescaled(state: &LinState, eps: f64, model: &MaterialModel) -> Result<f64> {
    let (a, b) = rescaled_energies(state, eps, model)?;
    Ok(a + b)
}

/// Compares `eps`-scaled finite-strain runs with the linearized run.
pub fn epsilon_study(
    scenario: &EpsScenario,
    eps_list: &[f64],
    fine_tau: f64,
) -> Result<VerificationReport> {
    if eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidInput("scalings must be positive".into()));
    }
    let model = scenario.problem.model;
    let quad = quadratic_limit(&model)?;
    let lin_problem = LinProblem {
        quad,
        loading: scenario.problem.loading.clone(),
    };
    let grid = TimeGrid::with_step(scenario.t_final, fine_tau)?;
    let lin = run_linearized(&scenario.initial, grid, &lin_problem)?;
    let lin_stored = |s: &LinState| {
        let (a, b) = lin_energy_parts(s, &quad);
        a + b
    };
    let points = eps_list
        .par_iter()
        .map(|&eps| {
            let problem = Problem {
                model,
                loading: scenario.problem.loading.scaled(eps),
                settings: scenario.problem.settings,
            };
            let traj = run_evolution(&scenario.initial.embed(eps), grid, &problem)?;
            let rescaled = rescale_displacements(&traj.states, eps);
            let mut u_error: f64 = 0.0;
            let mut v_error: f64 = 0.0;
            for (a, b) in rescaled.iter().zip(&lin.states) {
                u_error = u_error.max(sup_diff(&a.displacement(), &b.displacement()));
                v_error = v_error.max(sup_diff(&a.viscous(), &b.viscous()));
            }
            let gap_initial = (stored_rescaled(&scenario.initial, eps, &model)?
                - lin_stored(&scenario.initial))
            .abs();
            let last = rescaled.last().expect("trajectory is nonempty");
            let gap_final = (stored_rescaled(last, eps, &model)?
                - lin_stored(lin.states.last().expect("nonempty")))
            .abs();
            Ok(EpsPoint {
                eps,
                u_error,
                v_error,
                gap_initial,
                gap_final,
            })
        })
        .collect::<Result<Vec<EpsPoint>>>()?;

    let worst = points
        .iter()
        .map(|p| p.u_error.max(p.v_error).max(p.gap_initial).max(p.gap_final))
        .fold(0.0, f64::max);
    let eps: Vec<f64> = points.iter().map(|p| p.eps).collect();
    let u_errors: Vec<f64> = points.iter().map(|p| p.u_error).collect();
    let v_errors: Vec<f64> = points.iter().map(|p| p.v_error).collect();
    let gaps: Vec<f64> = points.iter().map(|p| p.gap_initial).collect();
    let mode = scenario.initial.embed(1.0).mode();
    let gap_threshold = if mode == Mode::ShearColumn {
        MIN_DENSITY_RATE
    } else {
        MIN_MP_GAP_RATE
    };
    let mut rates = BTreeMap::new();
    let residuals = if worst <= EPS_INDEPENDENT_TOL {
        vec![EPS_INDEPENDENT_TOL - worst]
    } else {
        let mut r = Vec::new();
        for (name, errors) in [("u_error", &u_errors), ("v_error", &v_errors)] {
            // a component that does not feel the nonlinearity stays at rounding level
            if sup(errors) <= EPS_INDEPENDENT_TOL {
                r.push(EPS_INDEPENDENT_TOL - sup(errors));
                continue;
            }
            r.extend(errors.windows(2).map(|w| w[0] - w[1]));
            if points.len() >= 3 {
                let rate = fitted_rate(&eps, errors).unwrap_or(f64::NEG_INFINITY);
                rates.insert(name.to_string(), rate);
                r.push(rate - MIN_EPS_ERROR_RATE);
            }
        }
        if points.len() >= 3 && sup(&gaps) > 1e-14 {
            let g_rate = fitted_rate(&eps, &gaps).unwrap_or(f64::NEG_INFINITY);
            rates.insert("gap_initial".to_string(), g_rate);
            r.push(g_rate - gap_threshold);
        }
        r
    };
    let mut report = VerificationReport::new("epsilon_study", residuals, 0.0)
        .with_param("fine_tau", fine_tau)
        .with_param("eps_independent", worst <= EPS_INDEPENDENT_TOL)
        .with_param("gap_rate_threshold", gap_threshold)
        .with_param("points", &points);
    report.rates = rates;
    Ok(report)
}

/// Sup-over-grid gaps `|W^eps - W0|` of all three densities and their rate in `eps`.
pub fn density_convergence<D: Densities + ?Sized>(
    d: &D,
    eps_list: &[f64],
    probe_grid: &[f64],
) -> Result<VerificationReport> {
    let limit = quadratic_limit(d)?;
    let mut per_kind: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    let mut max_gaps = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let mut worst: f64 = 0.0;
        for kind in DensityKind::ALL {
            let mut gap: f64 = 0.0;
            for &a in probe_grid {
                gap = gap.max((rescaled_density(d, kind, eps, a)? - limit.form(kind, a)).abs());
            }
            per_kind.entry(kind.name()).or_default().push(gap);
            worst = worst.max(gap);
        }
        max_gaps.push(worst);
    }
    let exact = sup(&max_gaps) <= DENSITY_GAP_FLOOR;
    let rate = if exact {
        None
    } else {
        fitted_rate(eps_list, &max_gaps)
    };
    let residuals = if exact {
        vec![0.0]
    } else {
        match rate {
            Some(r) => vec![r - MIN_DENSITY_RATE],
            None if eps_list.len() >= 2 => vec![f64::NEG_INFINITY],
            None => vec![],
        }
    };
    let mut report = VerificationReport::new("density_convergence", residuals, 0.0)
        .with_param("eps_list", eps_list)
        .with_param("max_gaps", &max_gaps)
        .with_param("gaps", &per_kind);
    if let Some(r) = rate {
        report = report.with_rate("gap", r);
    }
    Ok(report)
}
