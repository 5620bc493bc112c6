//! States, the shear-column discretization, strains, and the loading functional.
//!
//! On the shear column the total and viscous deformations are
//! `y(X) = X + gamma(X2) e1` and `y_vi(X) = X + beta(X2) e1`. Because
//! `(e1 (x) e2)^2 = 0`, the elastic factor of the composition is
//! `I + (gamma' - beta') e1 (x) e2` and `det grad y_vi = 1` holds for every
//! profile, so incompressibility and injectivity never need checking.
//!
//! A material point carries the scalars `F` and `F_vi > 0` and is read as a
//! homogeneously stretched unit bar for the purpose of loading.
//!
//! Energies drop the state-independent part of the loading work.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rheology::{Densities, MaterialModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    MaterialPoint,
    ShearColumn,
}

/// Uniform P1 mesh of the column `(0, 1)`; node 0 is clamped, node `n` carries the traction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShearColumnMesh {
    n_elements: usize,
}

impl ShearColumnMesh {
    pub fn new(n_elements: usize) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::InvalidInput(
                "shear column needs at least one element".into(),
            ));
        }
        Ok(ShearColumnMesh { n_elements })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn n_nodes(&self) -> usize {
        self.n_elements + 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_elements as f64
    }

    pub fn node_coords(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|j| j as f64 * self.h()).collect()
    }

    /// Trapezoid weights of the nodes; exact for P1 profiles against constant forces.
    pub fn trapezoid_weight(&self, node: usize) -> f64 {
        if node == 0 || node == self.n_elements {
            0.5 * self.h()
        } else {
            self.h()
        }
    }

    pub fn rest(&self) -> State {
        State::ShearColumn {
            gamma: vec![0.0; self.n_nodes()],
            beta: vec![0.0; self.n_nodes()],
        }
    }

    /// Samples `gamma` and `beta` profiles at the nodes, clamping `gamma(0)` and centering `beta`.
    pub fn sample(&self, gamma: impl Fn(f64) -> f64, beta: impl Fn(f64) -> f64) -> State {
        let xs = self.node_coords();
        let mut g: Vec<f64> = xs.iter().map(|&x| gamma(x)).collect();
        g[0] = 0.0;
        let b: Vec<f64> = xs.iter().map(|&x| beta(x)).collect();
        let mut state = State::ShearColumn { gamma: g, beta: b };
        state.project_zero_mean();
        state
    }
}

/// Slopes of a nodal P1 profile on a uniform mesh of `(0, 1)`.
pub fn slopes(nodal: &[f64]) -> Vec<f64> {
    let n = nodal.len() - 1;
    let inv_h = n as f64;
    nodal.windows(2).map(|w| (w[1] - w[0]) * inv_h).collect()
}

/// Length-weighted mean of a nodal P1 profile.
pub fn profile_mean(nodal: &[f64]) -> f64 {
    let h = 1.0 / (nodal.len() - 1) as f64;
    nodal.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum()
}

/// Degrees of freedom of the pair (total deformation, viscous deformation).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum State {
    MaterialPoint {
        f: f64,
        f_vi: f64,
    },
    /// Nodal `gamma` (with `gamma[0] = 0`) and zero-mean nodal `beta`.
    ShearColumn {
        gamma: Vec<f64>,
        beta: Vec<f64>,
    },
}

impl State {
    pub fn material_point(f: f64, f_vi: f64) -> Self {
        State::MaterialPoint { f, f_vi }
    }

    pub fn mode(&self) -> Mode {
        match self {
            State::MaterialPoint { .. } => Mode::MaterialPoint,
            State::ShearColumn { .. } => Mode::ShearColumn,
        }
    }

    pub fn mesh(&self) -> Option<ShearColumnMesh> {
        match self {
            State::MaterialPoint { .. } => None,
            State::ShearColumn { gamma, .. } => Some(ShearColumnMesh {
                n_elements: gamma.len() - 1,
            }),
        }
    }

    /// The rest state `y = y_vi = id` of the same layout.
    pub fn rest_like(&self) -> State {
        match self {
            State::MaterialPoint { .. } => State::MaterialPoint { f: 1.0, f_vi: 1.0 },
            State::ShearColumn { gamma, .. } => State::ShearColumn {
                gamma: vec![0.0; gamma.len()],
                beta: vec![0.0; gamma.len()],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            State::MaterialPoint { f, f_vi } => {
                if !f.is_finite() || !f_vi.is_finite() {
                    return Err(Error::InvalidInput(
                        "non-finite material-point state".into(),
                    ));
                }
                if *f_vi <= 0.0 {
                    return Err(Error::Infeasible { element: 0 });
                }
            }
            State::ShearColumn { gamma, beta } => {
                if gamma.len() < 2 || gamma.len() != beta.len() {
                    return Err(Error::InvalidInput(
                        "shear profiles need matching lengths >= 2".into(),
                    ));
                }
                if gamma[0] != 0.0 {
                    return Err(Error::InvalidInput(
                        "gamma(0) must vanish on the clamped boundary".into(),
                    ));
                }
                let mean = profile_mean(beta);
                if mean.abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "beta has nonzero mean {mean:e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Element-wise elastic strain: `gamma' - beta'`, or `F / F_vi - 1`.
    pub fn elastic_strain(&self) -> Vec<f64> {
        match self {
            State::MaterialPoint { f, f_vi } => vec![f / f_vi - 1.0],
            State::ShearColumn { gamma, beta } => slopes(gamma)
                .iter()
                .zip(slopes(beta))
                .map(|(g, b)| g - b)
                .collect(),
        }
    }

    /// Element-wise viscous strain: `beta'`, or `F_vi - 1`.
    pub fn viscous_strain(&self) -> Vec<f64> {
        match self {
            State::MaterialPoint { f_vi, .. } => vec![f_vi - 1.0],
            State::ShearColumn { beta, .. } => slopes(beta),
        }
    }

    /// Shifts `beta` to zero mean; energies only see `beta'`.
    pub fn project_zero_mean(&mut self) {
        if let State::ShearColumn { beta, .. } = self {
            let mean = profile_mean(beta);
            beta.iter_mut().for_each(|b| *b -= mean);
        }
    }

    /// Composition `y = y_el o y_vi` evaluated at the nodes, returned as the shear profile of `y`.
    pub fn composed_profile(&self) -> Vec<f64> {
        match self {
            State::MaterialPoint { f, .. } => vec![*f],
            State::ShearColumn { gamma, beta } => {
                // y_el(z) = z + (gamma - beta)(z2) e1 and y_vi leaves X2 untouched
                gamma.iter().zip(beta).map(|(g, b)| (g - b) + b).collect()
            }
        }
    }

    /// All degrees of freedom: `[F, F_vi]` or `[gamma_0..gamma_n, beta_0..beta_n]`.
    pub fn dofs(&self) -> Vec<f64> {
        match self {
            State::MaterialPoint { f, f_vi } => vec![*f, *f_vi],
            State::ShearColumn { gamma, beta } => gamma.iter().chain(beta).cloned().collect(),
        }
    }

    pub fn with_dofs(&self, dofs: &[f64]) -> State {
        match self {
            State::MaterialPoint { .. } => State::MaterialPoint {
                f: dofs[0],
                f_vi: dofs[1],
            },
            State::ShearColumn { gamma, .. } => {
                let n = gamma.len();
                State::ShearColumn {
                    gamma: dofs[..n].to_vec(),
                    beta: dofs[n..2 * n].to_vec(),
                }
            }
        }
    }

    /// Free coordinates used by the solvers: `[F, F_vi]`, or
    /// `[gamma_1..gamma_n, beta_1 - beta_0 .. beta_n - beta_0]` (Dirichlet node and
    /// the constant shift of `beta` removed).
    pub fn reduced(&self) -> Vec<f64> {
        match self {
            State::MaterialPoint { f, f_vi } => vec![*f, *f_vi],
            State::ShearColumn { gamma, beta } => gamma[1..]
                .iter()
                .cloned()
                .chain(beta[1..].iter().map(|b| b - beta[0]))
                .collect(),
        }
    }

    /// Inverse of [`State::reduced`] in the gauge `beta_0 = 0` (not yet centered).
    pub fn from_reduced_raw(&self, x: &[f64]) -> State {
        match self {
            State::MaterialPoint { .. } => State::MaterialPoint {
                f: x[0],
                f_vi: x[1],
            },
            State::ShearColumn { gamma, .. } => {
                let n = gamma.len() - 1;
                let mut g = Vec::with_capacity(n + 1);
                g.push(0.0);
                g.extend_from_slice(&x[..n]);
                let mut b = Vec::with_capacity(n + 1);
                b.push(0.0);
                b.extend_from_slice(&x[n..2 * n]);
                State::ShearColumn { gamma: g, beta: b }
            }
        }
    }

    pub fn from_reduced(&self, x: &[f64]) -> State {
        let mut s = self.from_reduced_raw(x);
        s.project_zero_mean();
        s
    }

    /// Number of elastic (total-deformation) entries at the front of the reduced vector.
    pub fn n_elastic_reduced(&self) -> usize {
        match self {
            State::MaterialPoint { .. } => 1,
            State::ShearColumn { gamma, .. } => gamma.len() - 1,
        }
    }
}

/// Picks the reduced entries out of a full-layout gradient.
pub fn reduce_gradient(state: &State, full: &[f64]) -> Vec<f64> {
    match state {
        State::MaterialPoint { .. } => full.to_vec(),
        State::ShearColumn { gamma, .. } => {
            let n1 = gamma.len();
            full[1..n1].iter().chain(&full[n1 + 1..]).cloned().collect()
        }
    }
}

/// Real polynomial in `t` with ascending coefficients.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn constant(c: f64) -> Self {
        Polynomial(vec![c])
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().skip(1).all(|&c| c == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Polynomial {
        Polynomial(self.0.iter().map(|c| c * factor).collect())
    }
}

/// Body force `f(t)` (spatially constant shear component) and top traction `g(t)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Loading {
    pub f: Polynomial,
    pub g: Polynomial,
}

impl Loading {
    pub fn zero() -> Self {
        Loading::default()
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_zero() && self.g.is_zero()
    }

    pub fn is_time_independent(&self) -> bool {
        self.f.is_constant() && self.g.is_constant()
    }

    pub fn scaled(&self, factor: f64) -> Loading {
        Loading {
            f: self.f.scaled(factor),
            g: self.g.scaled(factor),
        }
    }

    /// Coefficients of the linear work functional at time `t`, full dof layout.
    pub fn work_vector(&self, t: f64, state: &State) -> Vec<f64> {
        let f = self.f.eval(t);
        let g = self.g.eval(t);
        match state {
            // unit bar y(X) = F X: int f y dX = f F / 2, traction at X = 1
            State::MaterialPoint { .. } => vec![0.5 * f + g, 0.0],
            State::ShearColumn { gamma, .. } => {
                let mesh = state.mesh().expect("shear state has a mesh");
                let n = gamma.len();
                let mut w = vec![0.0; 2 * n];
                for (j, wj) in w.iter_mut().take(n).enumerate() {
                    *wj = f * mesh.trapezoid_weight(j);
                }
                w[n - 1] += g;
                w
            }
        }
    }

    /// `<l(t), y>` without the state-independent constant.
    pub fn work(&self, t: f64, state: &State) -> f64 {
        self.work_vector(t, state)
            .iter()
            .zip(state.dofs())
            .map(|(w, x)| w * x)
            .sum()
    }

    /// `int_{t0}^{t1} <dl/dt, y> dt` at frozen `y`, exact for polynomial coefficients.
    pub fn work_increment(&self, t0: f64, t1: f64, state: &State) -> f64 {
        self.work(t1, state) - self.work(t0, state)
    }
}

/// Stored-energy split of `E = W_el + W_vi - <l, y>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyParts {
    pub w_el: f64,
    pub w_vi: f64,
    pub load_work: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.w_el + self.w_vi - self.load_work
    }

    pub fn stored(&self) -> f64 {
        self.w_el + self.w_vi
    }
}

pub fn energy_parts(
    t: f64,
    state: &State,
    model: &MaterialModel,
    loading: &Loading,
) -> Result<EnergyParts> {
    let load_work = loading.work(t, state);
    match state {
        State::MaterialPoint { f, f_vi } => {
            if *f_vi <= 0.0 {
                return Err(Error::Infeasible { element: 0 });
            }
            let w_vi = model
                .w_vi(f_vi - 1.0)
                .map_err(|_| Error::Infeasible { element: 0 })?;
            Ok(EnergyParts {
                w_el: model.w_el(f / f_vi - 1.0),
                w_vi,
                load_work,
            })
        }
        State::ShearColumn { beta, .. } => {
            let h = 1.0 / (beta.len() - 1) as f64;
            let w_el = state
                .elastic_strain()
                .iter()
                .map(|&s| h * model.w_el(s))
                .sum();
            let mut w_vi = 0.0;
            for (e, b) in slopes(beta).into_iter().enumerate() {
                w_vi += h * model
                    .w_vi(b)
                    .map_err(|_| Error::Infeasible { element: e })?;
            }
            Ok(EnergyParts {
                w_el,
                w_vi,
                load_work,
            })
        }
    }
}

/// Total energy `E(t, y_el, y_vi)` and its gradient in the full dof layout.
pub fn total_energy(
    t: f64,
    state: &State,
    model: &MaterialModel,
    loading: &Loading,
) -> Result<(f64, Vec<f64>)> {
    let parts = energy_parts(t, state, model, loading)?;
    let work = loading.work_vector(t, state);
    let mut grad = match state {
        State::MaterialPoint { f, f_vi } => {
            let s = f / f_vi - 1.0;
            let sigma = model.dw_el(s);
            let dvi = model.dw_vi(f_vi - 1.0)?;
            vec![sigma / f_vi, -sigma * f / (f_vi * f_vi) + dvi]
        }
        State::ShearColumn { gamma, beta } => {
            let n = gamma.len();
            let mut grad = vec![0.0; 2 * n];
            let el = state.elastic_strain();
            let vi = slopes(beta);
            // h * W'(slope) * d(slope)/d(node) with d(slope) = +-1/h
            for e in 0..n - 1 {
                let sigma = model.dw_el(el[e]);
                let tau_vi = model.dw_vi(vi[e])?;
                grad[e] -= sigma;
                grad[e + 1] += sigma;
                grad[n + e] -= tau_vi - sigma;
                grad[n + e + 1] += tau_vi - sigma;
            }
            grad
        }
    };
    grad.iter_mut().zip(work).for_each(|(g, w)| *g -= w);
    Ok((parts.total(), grad))
}

/// Rate arguments of `psi` for the transition `old -> new` over `tau`.
fn rates(old: &State, new: &State, tau: f64) -> Vec<f64> {
    match (old, new) {
        (State::MaterialPoint { f_vi: a, .. }, State::MaterialPoint { f_vi: b, .. }) => {
            vec![(b - a) / (tau * a)]
        }
        (State::ShearColumn { beta: a, .. }, State::ShearColumn { beta: b, .. }) => slopes(a)
            .iter()
            .zip(slopes(b))
            .map(|(sa, sb)| (sb - sa) / tau)
            .collect(),
        _ => panic!("dissipation between states of different modes"),
    }
}

/// `tau * Psi(old, (new - old) / tau)`.
pub fn dissipation_increment(old: &State, new: &State, tau: f64, model: &MaterialModel) -> f64 {
    let r = rates(old, new, tau);
    let weight = match old {
        State::MaterialPoint { .. } => 1.0,
        State::ShearColumn { beta, .. } => 1.0 / (beta.len() - 1) as f64,
    };
    tau * weight * r.iter().map(|&x| model.psi(x)).sum::<f64>()
}

/// [`dissipation_increment`] and its gradient with respect to `new` (full layout).
pub fn dissipation_increment_with_grad(
    old: &State,
    new: &State,
    tau: f64,
    model: &MaterialModel,
) -> (f64, Vec<f64>) {
    let value = dissipation_increment(old, new, tau, model);
    let r = rates(old, new, tau);
    let grad = match old {
        State::MaterialPoint { f_vi, .. } => vec![0.0, model.dpsi(r[0]) / f_vi],
        State::ShearColumn { gamma, .. } => {
            let n = gamma.len();
            let mut grad = vec![0.0; 2 * n];
            // tau h psi'(r) dr/dbeta with dr/dbeta = +-1/(tau h)
            for (e, &re) in r.iter().enumerate() {
                let d = model.dpsi(re);
                grad[n + e] -= d;
                grad[n + e + 1] += d;
            }
            grad
        }
    };
    (value, grad)
}

/// Coefficients of a quadratic shear-column increment
/// `sum_e h [c_el (g' - b')^2 / 2 + c_vi b'^2 / 2 + d (b' - b_old')^2 / (2 tau)] - <l, gamma>`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ShearQuadratic {
    pub c_el: f64,
    pub c_vi: f64,
    pub d: f64,
    pub tau: f64,
}

/// Hessian and right-hand side of [`ShearQuadratic`] in reduced coordinates
/// (`gamma_1..gamma_n`, then `beta_1..beta_n` with `beta_0 = 0`).
pub(crate) fn shear_quadratic_system(
    mesh: &ShearColumnMesh,
    q: ShearQuadratic,
    old_beta_slopes: &[f64],
    f: f64,
    g: f64,
) -> (nalgebra::DMatrix<f64>, Vec<f64>) {
    let n = mesh.n_elements();
    let h = mesh.h();
    let mut hess = nalgebra::DMatrix::<f64>::zeros(2 * n, 2 * n);
    let mut rhs = vec![0.0; 2 * n];
    let gamma_idx = |node: usize| (node > 0).then(|| node - 1);
    let beta_idx = |node: usize| (node > 0).then(|| n + node - 1);
    let k = [[q.c_el, -q.c_el], [-q.c_el, q.c_el + q.c_vi + q.d / q.tau]];
    for e in 0..n {
        let dofs = [gamma_idx(e), gamma_idx(e + 1), beta_idx(e), beta_idx(e + 1)];
        // rows of the slope operator for (gamma', beta')
        let b = [[-1.0 / h, 1.0 / h, 0.0, 0.0], [0.0, 0.0, -1.0 / h, 1.0 / h]];
        for a in 0..4 {
            let Some(ia) = dofs[a] else { continue };
            for c in 0..4 {
                let Some(ic) = dofs[c] else { continue };
                let mut v = 0.0;
                for (r, kr) in k.iter().enumerate() {
                    for (s, krs) in kr.iter().enumerate() {
                        v += b[r][a] * krs * b[s][c];
                    }
                }
                hess[(ia, ic)] += h * v;
            }
            rhs[ia] += h * (q.d / q.tau) * old_beta_slopes[e] * b[1][a];
        }
    }
    for node in 1..=n {
        rhs[node - 1] += f * mesh.trapezoid_weight(node);
    }
    rhs[n - 1] += g;
    (hess, rhs)
}
