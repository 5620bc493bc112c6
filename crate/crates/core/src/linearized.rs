//! Linearized Poynting–Thomson system and the bridge from finite-strain runs.
//!
//! The linear problem is solved with the same incremental scheme as the
//! nonlinear one, minimizing `E0(t_i, u, v) + tau Psi0((v - v_prev) / tau)` with
//! `E0 = |u' - v'|^2_Cel + |v'|^2_Cvi - <l0, u>` and `Psi0(w) = |w|^2_D`.

use serde::Serialize;

use crate::domain::{
    self, shear_quadratic_system, Loading, ShearColumnMesh, ShearQuadratic, State,
};
use crate::error::{Error, Result};
use crate::minimize::solve_quadratic;
use crate::rheology::{MaterialModel, QuadraticLimit};
use crate::stepper::TimeGrid;

/// Displacement `u` and viscous displacement `v`, laid out like [`State`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LinState {
    MaterialPoint {
        u: f64,
        v: f64,
    },
    /// Nodal `u` with `u[0] = 0`, zero-mean nodal `v`.
    ShearColumn {
        u: Vec<f64>,
        v: Vec<f64>,
    },
}

impl LinState {
    pub fn zero_like(state: &State) -> LinState {
        match state {
            State::MaterialPoint { .. } => LinState::MaterialPoint { u: 0.0, v: 0.0 },
            State::ShearColumn { gamma, .. } => LinState::ShearColumn {
                u: vec![0.0; gamma.len()],
                v: vec![0.0; gamma.len()],
            },
        }
    }

    pub fn shear(
        mesh: &ShearColumnMesh,
        u: impl Fn(f64) -> f64,
        v: impl Fn(f64) -> f64,
    ) -> LinState {
        LinState::from_layout(&mesh.sample(u, v))
    }

    pub fn dofs(&self) -> Vec<f64> {
        match self {
            LinState::MaterialPoint { u, v } => vec![*u, *v],
            LinState::ShearColumn { u, v } => u.iter().chain(v).cloned().collect(),
        }
    }

    pub fn viscous(&self) -> Vec<f64> {
        match self {
            LinState::MaterialPoint { v, .. } => vec![*v],
            LinState::ShearColumn { v, .. } => v.clone(),
        }
    }

    pub fn displacement(&self) -> Vec<f64> {
        match self {
            LinState::MaterialPoint { u, .. } => vec![*u],
            LinState::ShearColumn { u, .. } => u.clone(),
        }
    }

    /// Same numbers in a [`State`] container, to borrow its coordinate maps.
    fn as_layout(&self) -> State {
        match self {
            LinState::MaterialPoint { u, v } => State::MaterialPoint { f: *u, f_vi: *v },
            LinState::ShearColumn { u, v } => State::ShearColumn {
                gamma: u.clone(),
                beta: v.clone(),
            },
        }
    }

    fn from_layout(state: &State) -> LinState {
        match state {
            State::MaterialPoint { f, f_vi } => LinState::MaterialPoint { u: *f, v: *f_vi },
            State::ShearColumn { gamma, beta } => LinState::ShearColumn {
                u: gamma.clone(),
                v: beta.clone(),
            },
        }
    }

    /// The finite-strain state `id + eps (u, v)`.
    pub fn embed(&self, eps: f64) -> State {
        match self {
            LinState::MaterialPoint { u, v } => State::MaterialPoint {
                f: 1.0 + eps * u,
                f_vi: 1.0 + eps * v,
            },
            LinState::ShearColumn { u, v } => State::ShearColumn {
                gamma: u.iter().map(|x| eps * x).collect(),
                beta: v.iter().map(|x| eps * x).collect(),
            },
        }
    }

    /// `((y - id) / eps, (y_vi - id) / eps)`.
    pub fn rescale(state: &State, eps: f64) -> LinState {
        match state {
            State::MaterialPoint { f, f_vi } => LinState::MaterialPoint {
                u: (f - 1.0) / eps,
                v: (f_vi - 1.0) / eps,
            },
            State::ShearColumn { gamma, beta } => LinState::ShearColumn {
                u: gamma.iter().map(|x| x / eps).collect(),
                v: beta.iter().map(|x| x / eps).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinProblem {
    pub quad: QuadraticLimit,
    /// Limit loading `l0`.
    pub loading: Loading,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinTrajectory {
    pub grid: TimeGrid,
    pub states: Vec<LinState>,
    pub diss_increments: Vec<f64>,
    pub delta: Vec<f64>,
}

/// `(W0_el, W0_vi)` of a state.
pub fn lin_energy_parts(state: &LinState, quad: &QuadraticLimit) -> (f64, f64) {
    match state {
        LinState::MaterialPoint { u, v } => {
            (0.5 * quad.c_el * (u - v).powi(2), 0.5 * quad.c_vi * v * v)
        }
        LinState::ShearColumn { u, v } => {
            let h = 1.0 / (u.len() - 1) as f64;
            let du = domain::slopes(u);
            let dv = domain::slopes(v);
            let w_el = du
                .iter()
                .zip(&dv)
                .map(|(a, b)| 0.5 * h * quad.c_el * (a - b).powi(2))
                .sum();
            let w_vi = dv.iter().map(|b| 0.5 * h * quad.c_vi * b * b).sum();
            (w_el, w_vi)
        }
    }
}

pub fn lin_load_work(t: f64, state: &LinState, loading: &Loading) -> f64 {
    let layout = state.as_layout();
    let w = loading.work_vector(t, &layout);
    w.iter().zip(layout.dofs()).map(|(a, b)| a * b).sum()
}

/// `E0(t, u, v)` and its gradient in the full layout.
pub fn lin_energy(t: f64, state: &LinState, problem: &LinProblem) -> (f64, Vec<f64>) {
    let q = &problem.quad;
    let (w_el, w_vi) = lin_energy_parts(state, q);
    let layout = state.as_layout();
    let work = problem.loading.work_vector(t, &layout);
    let mut grad = match state {
        LinState::MaterialPoint { u, v } => {
            let s = q.c_el * (u - v);
            vec![s, -s + q.c_vi * v]
        }
        LinState::ShearColumn { u, v } => {
            let n = u.len();
            let du = domain::slopes(u);
            let dv = domain::slopes(v);
            let mut grad = vec![0.0; 2 * n];
            for e in 0..n - 1 {
                let sigma = q.c_el * (du[e] - dv[e]);
                let tau_vi = q.c_vi * dv[e];
                grad[e] -= sigma;
                grad[e + 1] += sigma;
                grad[n + e] -= tau_vi - sigma;
                grad[n + e + 1] += tau_vi - sigma;
            }
            grad
        }
    };
    grad.iter_mut().zip(&work).for_each(|(g, w)| *g -= w);
    let load: f64 = work.iter().zip(layout.dofs()).map(|(a, b)| a * b).sum();
    (w_el + w_vi - load, grad)
}

/// `tau Psi0((new - old) / tau)` and its gradient with respect to `new`.
pub fn lin_dissipation_increment(
    old: &LinState,
    new: &LinState,
    tau: f64,
    quad: &QuadraticLimit,
) -> (f64, Vec<f64>) {
    match (old, new) {
        (LinState::MaterialPoint { v: a, .. }, LinState::MaterialPoint { v: b, .. }) => {
            let rate = (b - a) / tau;
            (
                0.5 * tau * quad.d_diss * rate * rate,
                vec![0.0, quad.d_diss * rate],
            )
        }
        (LinState::ShearColumn { v: a, .. }, LinState::ShearColumn { v: b, .. }) => {
            let n = a.len();
            let h = 1.0 / (n - 1) as f64;
            let mut grad = vec![0.0; 2 * n];
            let mut value = 0.0;
            for (e, (sa, sb)) in domain::slopes(a).iter().zip(domain::slopes(b)).enumerate() {
                let rate = (sb - sa) / tau;
                value += 0.5 * h * tau * quad.d_diss * rate * rate;
                grad[n + e] -= quad.d_diss * rate;
                grad[n + e + 1] += quad.d_diss * rate;
            }
            (value, grad)
        }
        _ => panic!("dissipation between states of different modes"),
    }
}

/// Exact minimizer of the linear incremental problem at `t_i`.
pub fn lin_step(t_i: f64, prev: &LinState, tau: f64, problem: &LinProblem) -> Result<LinState> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step must be positive, got {tau}"
        )));
    }
    let q = &problem.quad;
    let f = problem.loading.f.eval(t_i);
    let g = problem.loading.g.eval(t_i);
    match prev {
        LinState::MaterialPoint { v, .. } => {
            let k = q.d_diss / tau;
            let hess = nalgebra::DMatrix::from_row_slice(
                2,
                2,
                &[q.c_el, -q.c_el, -q.c_el, q.c_el + q.c_vi + k],
            );
            let x = solve_quadratic(&hess, &[0.5 * f + g, k * v])?;
            Ok(LinState::MaterialPoint { u: x[0], v: x[1] })
        }
        LinState::ShearColumn { v, .. } => {
            let layout = prev.as_layout();
            let mesh = layout.mesh().expect("shear layout has a mesh");
            let sq = ShearQuadratic {
                c_el: q.c_el,
                c_vi: q.c_vi,
                d: q.d_diss,
                tau,
            };
            let (hess, rhs) = shear_quadratic_system(&mesh, sq, &domain::slopes(v), f, g);
            let x = solve_quadratic(&hess, &rhs)?;
            Ok(LinState::from_layout(&layout.from_reduced(&x)))
        }
    }
}

pub fn run_linearized(
    initial: &LinState,
    grid: TimeGrid,
    problem: &LinProblem,
) -> Result<LinTrajectory> {
    problem.quad.validate()?;
    let tau = grid.tau();
    let mut states = vec![initial.clone()];
    let mut diss_increments = Vec::with_capacity(grid.n_steps);
    let mut delta = vec![0.0];
    for i in 1..=grid.n_steps {
        let next = lin_step(grid.time(i), &states[i - 1], tau, problem).map_err(|e| {
            Error::StepFailed {
                step: i,
                source: Box::new(e),
            }
        })?;
        let (d, _) = lin_dissipation_increment(&states[i - 1], &next, tau, &problem.quad);
        diss_increments.push(d);
        delta.push(delta[i - 1] + d);
        states.push(next);
    }
    Ok(LinTrajectory {
        grid,
        states,
        diss_increments,
        delta,
    })
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Sup-norm of the free components of the discrete Euler–Lagrange equations of one step.
pub fn lin_step_residual(
    t_i: f64,
    prev: &LinState,
    new: &LinState,
    tau: f64,
    problem: &LinProblem,
) -> f64 {
    let (_, ge) = lin_energy(t_i, new, problem);
    let (_, gd) = lin_dissipation_increment(prev, new, tau, &problem.quad);
    let full: Vec<f64> = ge.iter().zip(&gd).map(|(a, b)| a + b).collect();
    sup(&domain::reduce_gradient(&new.as_layout(), &full))
}

/// Sup-norm of the elastic equilibrium residual, `d_u E0(t, u, v)` on free nodes.
pub fn lin_equilibrium_residual(t: f64, state: &LinState, problem: &LinProblem) -> f64 {
    let (_, g) = lin_energy(t, state, problem);
    let layout = state.as_layout();
    sup(&domain::reduce_gradient(&layout, &g)[..layout.n_elastic_reduced()])
}

/// The `u` minimizing `W0_el(., v) - <l0(t), .>` at the given `v`.
pub fn lin_equilibrium(t: f64, v_state: &LinState, problem: &LinProblem) -> Result<LinState> {
    let q = &problem.quad;
    let f = problem.loading.f.eval(t);
    let g = problem.loading.g.eval(t);
    match v_state {
        LinState::MaterialPoint { v, .. } => Ok(LinState::MaterialPoint {
            u: v + (0.5 * f + g) / q.c_el,
            v: *v,
        }),
        LinState::ShearColumn { v, .. } => {
            let n = v.len() - 1;
            let h = 1.0 / n as f64;
            let dv = domain::slopes(v);
            // stiffness c_el/h tridiag on u_1..u_n
            let mut k = nalgebra::DMatrix::<f64>::zeros(n, n);
            let mut rhs = vec![0.0; n];
            for e in 0..n {
                let a = (e > 0).then(|| e - 1);
                let b = e;
                let stiff = q.c_el / h;
                if let Some(a) = a {
                    k[(a, a)] += stiff;
                    k[(a, b)] -= stiff;
                    k[(b, a)] -= stiff;
                    rhs[a] -= q.c_el * dv[e];
                }
                k[(b, b)] += stiff;
                rhs[b] += q.c_el * dv[e];
            }
            let mesh = ShearColumnMesh::new(n)?;
            for (j, r) in rhs.iter_mut().enumerate() {
                *r += f * mesh.trapezoid_weight(j + 1);
            }
            rhs[n - 1] += g;
            let x = solve_quadratic(&k, &rhs)?;
            let mut u = vec![0.0];
            u.extend(x);
            Ok(LinState::ShearColumn { u, v: v.clone() })
        }
    }
}

/// Zero-load material point: `u = v = v0 exp(-(c_vi / D) t)`.
pub fn mp_lin_closed_form(v0: f64, quad: &QuadraticLimit, t: f64) -> (f64, f64) {
    let v = v0 * (-(quad.c_vi / quad.d_diss) * t).exp();
    (v, v)
}

/// Rescaled trajectory `(u_eps, v_eps)(t_i)` of a run with `eps`-scaled data.
pub fn rescale_displacements(states: &[State], eps: f64) -> Vec<LinState> {
    states.iter().map(|s| LinState::rescale(s, eps)).collect()
}

/// `(W^eps_el, W^eps_vi)` at rescaled variables: `eps^-2` times the finite-strain densities at `id + eps (u, v)`.
pub fn rescaled_energies(state: &LinState, eps: f64, model: &MaterialModel) -> Result<(f64, f64)> {
    let parts = domain::energy_parts(0.0, &state.embed(eps), model, &Loading::zero())?;
    Ok((parts.w_el / (eps * eps), parts.w_vi / (eps * eps)))
}

/// `eps^-2 tau Psi(id + eps v_old, ((id + eps v_new) - (id + eps v_old)) / tau)`.
pub fn rescaled_dissipation(
    old: &LinState,
    new: &LinState,
    tau: f64,
    eps: f64,
    model: &MaterialModel,
) -> f64 {
    domain::dissipation_increment(&old.embed(eps), &new.embed(eps), tau, model) / (eps * eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Polynomial;

    fn unit() -> LinProblem {
        LinProblem {
            quad: QuadraticLimit {
                c_el: 1.0,
                c_vi: 1.0,
                d_diss: 1.0,
            },
            loading: Loading::zero(),
        }
    }

    #[test]
    fn rest_stays_at_rest() {
        let p = unit();
        let rest = LinState::MaterialPoint { u: 0.0, v: 0.0 };
        assert_eq!(lin_step(0.1, &rest, 0.1, &p).unwrap(), rest);
        let mesh = ShearColumnMesh::new(4).unwrap();
        let rest = LinState::zero_like(&mesh.rest());
        let next = lin_step(0.1, &rest, 0.1, &p).unwrap();
        assert!(next.dofs().iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn scalar_implicit_euler_spot_value() {
        let prev = LinState::MaterialPoint { u: 0.5, v: 0.5 };
        let LinState::MaterialPoint { u, v } = lin_step(0.1, &prev, 0.1, &unit()).unwrap() else {
            unreachable!()
        };
        assert!((v - 0.5 / 1.1).abs() < 1e-14);
        assert!((u - v).abs() < 1e-14);
        assert!((v - 0.4545455).abs() < 1e-7);
    }

    #[test]
    fn closed_form_examples() {
        let q = unit().quad;
        assert!((mp_lin_closed_form(0.5, &q, 1.0).1 - 0.1839397).abs() < 1e-7);
        assert_eq!(mp_lin_closed_form(0.5, &q, 0.0), (0.5, 0.5));
        let q2 = QuadraticLimit { c_vi: 2.0, ..q };
        assert!((mp_lin_closed_form(0.5, &q2, 2f64.ln() / 2.0).1 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn scalar_run_converges_to_exponential() {
        let p = unit();
        let mut errs = Vec::new();
        for n in [10, 20, 40] {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let traj =
                run_linearized(&LinState::MaterialPoint { u: 0.5, v: 0.5 }, grid, &p).unwrap();
            let v = traj.states[n].viscous()[0];
            errs.push((v - 0.5 * (-1.0f64).exp()).abs());
        }
        assert!((errs[0] / errs[1]).log2() > 0.9);
        assert!((errs[1] / errs[2]).log2() > 0.9);
    }

    #[test]
    fn shear_step_satisfies_euler_lagrange() {
        let p = LinProblem {
            quad: QuadraticLimit {
                c_el: 1.3,
                c_vi: 0.7,
                d_diss: 1.1,
            },
            loading: Loading {
                f: Polynomial(vec![0.2, 0.1]),
                g: Polynomial::constant(-0.3),
            },
        };
        let mesh = ShearColumnMesh::new(8).unwrap();
        let prev = LinState::shear(&mesh, |x| 0.1 * x, |x| 0.3 * x * x);
        for &tau in &[1e-3, 0.1, 1.0] {
            let next = lin_step(0.5, &prev, tau, &p).unwrap();
            assert!(lin_step_residual(0.5, &prev, &next, tau, &p) < 1e-10);
            let mean = domain::profile_mean(&next.viscous());
            assert!(mean.abs() < 1e-14);
        }
    }

    #[test]
    fn equilibrium_solves_elastic_problem() {
        let p = LinProblem {
            quad: QuadraticLimit {
                c_el: 2.0,
                c_vi: 1.0,
                d_diss: 1.0,
            },
            loading: Loading {
                f: Polynomial::constant(0.5),
                g: Polynomial::constant(0.25),
            },
        };
        let mesh = ShearColumnMesh::new(6).unwrap();
        let v = LinState::shear(&mesh, |_| 0.0, |x| (3.0 * x).sin());
        let eq = lin_equilibrium(0.0, &v, &p).unwrap();
        assert!(lin_equilibrium_residual(0.0, &eq, &p) < 1e-12);
        let mp = lin_equilibrium(0.0, &LinState::MaterialPoint { u: 0.0, v: 0.2 }, &p).unwrap();
        assert!(lin_equilibrium_residual(0.0, &mp, &p) < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = LinProblem {
            quad: QuadraticLimit {
                c_el: 1.3,
                c_vi: 0.7,
                d_diss: 1.1,
            },
            loading: Loading {
                f: Polynomial::constant(0.4),
                g: Polynomial::constant(0.2),
            },
        };
        let mesh = ShearColumnMesh::new(5).unwrap();
        let s = LinState::shear(&mesh, |x| x * x, |x| 0.3 * x);
        let (_, g) = lin_energy(0.0, &s, &p);
        let x = s.dofs();
        let layout = s.as_layout();
        for k in 0..x.len() {
            let mut a = x.clone();
            let mut b = x.clone();
            a[k] += 1e-6;
            b[k] -= 1e-6;
            let ea = lin_energy(0.0, &LinState::from_layout(&layout.with_dofs(&a)), &p).0;
            let eb = lin_energy(0.0, &LinState::from_layout(&layout.with_dofs(&b)), &p).0;
            assert!(((ea - eb) / 2e-6 - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn rescaling_examples() {
        let s = State::material_point(1.0, 1.05);
        let LinState::MaterialPoint { v, .. } = LinState::rescale(&s, 0.1) else {
            unreachable!()
        };
        assert!((v - 0.5).abs() < 1e-14);
        let rest = ShearColumnMesh::new(3).unwrap().rest();
        assert!(rescale_displacements(&[rest.clone(), rest], 0.1)
            .iter()
            .all(|l| l.dofs().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn rescaled_energy_expansion() {
        let mesh = ShearColumnMesh::new(4).unwrap();
        let s = LinState::shear(&mesh, |x| x, |_| 0.0);
        let quartic = MaterialModel {
            a4: 1.0,
            ..MaterialModel::default()
        };
        for &eps in &[0.2, 0.1, 0.05] {
            let (w_el, w_vi) = rescaled_energies(&s, eps, &quartic).unwrap();
            assert!((w_el - (0.5 + eps * eps / 4.0)).abs() < 1e-13);
            assert_eq!(w_vi, 0.0);
            let (q_el, _) = rescaled_energies(&s, eps, &MaterialModel::default()).unwrap();
            assert!((q_el - 0.5).abs() < 1e-13);
        }
    }
}
