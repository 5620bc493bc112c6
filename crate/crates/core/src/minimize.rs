//! Local minimization with Armijo backtracking and a direct quadratic solver.
//!
//! Objectives return `Err` with an infeasibility error (see
//! [`Error::is_infeasible`]) where the energy is `+inf`; the line search
//! treats such points like any rejected trial and shrinks the step.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Search direction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Steepest descent.
    GradientDescent,
    /// Steepest descent preconditioned by an inverse-BFGS curvature estimate.
    Bfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinimizeSettings {
    /// Stopping tolerance on the gradient sup-norm.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub method: Method,
}

impl Default for MinimizeSettings {
    fn default() -> Self {
        MinimizeSettings {
            grad_tol: 1e-10,
            max_iter: 10_000,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            method: Method::GradientDescent,
        }
    }
}

impl MinimizeSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidInput("grad_tol must be positive".into()));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::InvalidInput("armijo_c must lie in (0, 1)".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidInput(
                "backtrack_factor must lie in (0, 1)".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub initial_value: f64,
    pub value: f64,
    pub grad_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub diagnostics: Diagnostics,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const MAX_BACKTRACKS: usize = 80;

/// Dense inverse-Hessian estimate, row-major.
struct InverseHessian {
    n: usize,
    m: Vec<f64>,
    fresh: bool,
}

impl InverseHessian {
    fn identity(n: usize) -> Self {
        let mut m = vec![0.0; n * n];
        (0..n).for_each(|i| m[i * n + i] = 1.0);
        InverseHessian { n, m, fresh: true }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| dot(&self.m[i * self.n..(i + 1) * self.n], v))
            .collect()
    }

    fn update(&mut self, s: &[f64], y: &[f64]) {
        let sy = dot(s, y);
        if !(sy > 1e-14 * sup_norm(s) * sup_norm(y) * self.n as f64) {
            return;
        }
        if self.fresh {
            let scale = sy / dot(y, y);
            self.m.iter_mut().for_each(|v| *v *= scale);
            self.fresh = false;
        }
        let n = self.n;
        let rho = 1.0 / sy;
        let hy = self.apply(y);
        let yhy = dot(y, &hy);
        // H+ = H - rho (H y s' + s y' H) + (rho^2 y'Hy + rho) s s'
        let c = rho * rho * yhy + rho;
        for i in 0..n {
            for j in 0..n {
                self.m[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + c * s[i] * s[j];
            }
        }
    }
}

/// Minimizes a smooth objective from `x0` until `|grad|_inf <= grad_tol`.
///
/// Accepted iterates never increase the objective beyond rounding noise.
/// Gradient descent starts each line search at the Barzilai-Borwein step.
/// Once the Armijo decrease falls below the resolution of `f`, a step that
/// keeps `f` within a few ulps is accepted (BFGS additionally asks for a
/// smaller Euclidean gradient). If no step above the resolution of `x`
/// leaves the rounding band the point is returned as stationary.
pub fn minimize_smooth<F>(objective: F, x0: &[f64], settings: &MinimizeSettings) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    minimize_observed(objective, x0, settings, |_, _| {})
}

/// [`minimize_smooth`] calling `on_accept(x, f)` for the start point and every accepted iterate.
pub fn minimize_observed<F, O>(
    mut objective: F,
    x0: &[f64],
    settings: &MinimizeSettings,
    mut on_accept: O,
) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    O: FnMut(&[f64], f64),
{
    settings.validate()?;
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective(&x)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonfiniteObjective);
    }
    let initial_value = f;
    on_accept(&x, f);
    let mut evaluations = 1;
    let mut hinv = InverseHessian::identity(n);
    let mut gd_alpha = 1.0_f64;

    let finish =
        |x: Vec<f64>, f: f64, g: &[f64], iterations: usize, evaluations: usize, converged: bool| {
            Minimum {
                x,
                diagnostics: Diagnostics {
                    iterations,
                    evaluations,
                    initial_value,
                    value: f,
                    grad_norm: sup_norm(g),
                    converged,
                },
            }
        };

    for iter in 0..settings.max_iter {
        let g_norm = sup_norm(&g);
        if g_norm <= settings.grad_tol {
            return Ok(finish(x, f, &g, iter, evaluations, true));
        }
        let mut d: Vec<f64> = match settings.method {
            Method::Bfgs => hinv.apply(&g).iter().map(|v| -v).collect(),
            Method::GradientDescent => g.iter().map(|v| -v).collect(),
        };
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hinv = InverseHessian::identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut alpha = match settings.method {
            Method::Bfgs => 1.0,
            Method::GradientDescent => gd_alpha.min(1e12),
        };

        let g_sq = dot(&g, &g);
        let resolution = 2.0 * f64::EPSILON * sup_norm(&x).max(1.0);
        let d_norm = sup_norm(&d);
        let mut accepted = None;
        let mut last_in_noise = true;
        for _ in 0..MAX_BACKTRACKS {
            if alpha * d_norm <= resolution {
                break;
            }
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            evaluations += 1;
            match objective(&trial) {
                Ok((ft, gt)) => {
                    if !ft.is_finite() || gt.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonfiniteObjective);
                    }
                    let noise = 8.0 * f64::EPSILON * f.abs().max(ft.abs());
                    last_in_noise = (ft - f).abs() <= noise;
                    // below the resolution of f, descend on |grad|^2 instead
                    let accept = if last_in_noise {
                        settings.method == Method::GradientDescent || dot(&gt, &gt) < g_sq
                    } else {
                        ft - f <= settings.armijo_c * alpha * slope
                    };
                    if accept {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
                Err(e) if e.is_infeasible() => last_in_noise = false,
                Err(e) => return Err(e),
            }
            alpha *= settings.backtrack_factor;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            // no resolvable step changes f beyond rounding: stationary at machine precision
            let stationary = last_in_noise;
            let best = finish(x, f, &g, iter, evaluations, stationary);
            if stationary {
                return Ok(best);
            }
            return Err(Error::LineSearchStalled {
                best: Box::new(best),
            });
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        match settings.method {
            Method::Bfgs => hinv.update(&s, &y),
            Method::GradientDescent => {
                // Barzilai-Borwein guess for the next trial step
                let sy = dot(&s, &y);
                gd_alpha = if sy > 0.0 {
                    dot(&s, &s) / sy
                } else {
                    alpha / settings.backtrack_factor
                };
            }
        }
        on_accept(&x_new, f_new);
        x = x_new;
        f = f_new;
        g = g_new;
    }
    if sup_norm(&g) <= settings.grad_tol {
        return Ok(finish(x, f, &g, settings.max_iter, evaluations, true));
    }
    Err(Error::MaxIterExceeded {
        best: Box::new(finish(x, f, &g, settings.max_iter, evaluations, false)),
    })
}

/// Unique minimizer of `x'Hx/2 - b'x` for symmetric positive definite `H`.
pub fn solve_quadratic(hessian: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    if hessian.nrows() != n || hessian.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "hessian is {}x{}, rhs has {n} entries",
            hessian.nrows(),
            hessian.ncols()
        )));
    }
    let scale = hessian.amax().max(1.0);
    if (hessian - hessian.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidInput("hessian is not symmetric".into()));
    }
    let chol = hessian.clone().cholesky().ok_or(Error::NotSpd)?;
    let b = DVector::from_column_slice(rhs);
    let mut x = chol.solve(&b);
    let tol = 1e-10 * (1.0 + b.amax());
    for _ in 0..3 {
        let r = &b - hessian * &x;
        if r.amax() <= tol {
            break;
        }
        x += chol.solve(&r);
    }
    Ok(x.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(a: Vec<f64>) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> {
        move |x: &[f64]| {
            let d: Vec<f64> = x.iter().zip(&a).map(|(xi, ai)| xi - ai).collect();
            Ok((0.5 * dot(&d, &d), d))
        }
    }

    #[test]
    fn quadratic_bowl() {
        let a = vec![1.0, -2.0, 0.5];
        for method in [Method::Bfgs, Method::GradientDescent] {
            let s = MinimizeSettings {
                method,
                ..Default::default()
            };
            let m = minimize_smooth(bowl(a.clone()), &[0.0; 3], &s).unwrap();
            assert!(m.diagnostics.converged);
            for (x, ai) in m.x.iter().zip(&a) {
                assert!((x - ai).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn quartic_objective() {
        for method in [Method::Bfgs, Method::GradientDescent] {
            let s = MinimizeSettings {
                method,
                ..Default::default()
            };
            let m = minimize_smooth(
                |x: &[f64]| Ok((0.25 * x[0].powi(4) - x[0], vec![x[0].powi(3) - 1.0])),
                &[0.0],
                &s,
            )
            .unwrap();
            assert!((m.x[0] - 1.0).abs() < 1e-8, "{method:?}: {}", m.x[0]);
        }
    }

    #[test]
    fn infeasible_region_is_backtracked() {
        // +inf for x > 0.9, minimum of the smooth part at x = 2
        let obj = |x: &[f64]| {
            if x[0] > 0.9 {
                Err(Error::Infeasible { element: 0 })
            } else {
                Ok((
                    -x[0] + 1.0 / (0.9 - x[0]).max(1e-300),
                    vec![-1.0 + 1.0 / (0.9 - x[0]).powi(2)],
                ))
            }
        };
        let m = minimize_smooth(obj, &[0.0], &MinimizeSettings::default()).unwrap();
        assert!((m.x[0] + 0.1).abs() < 1e-9, "{}", m.x[0]);
    }

    #[test]
    fn nonfinite_is_an_error() {
        let obj = |x: &[f64]| Ok((if x[0] > 0.5 { f64::NAN } else { -x[0] }, vec![-1.0]));
        assert!(matches!(
            minimize_smooth(obj, &[0.0], &MinimizeSettings::default()),
            Err(Error::NonfiniteObjective)
        ));
    }

    #[test]
    fn iteration_cap_returns_best() {
        let s = MinimizeSettings {
            max_iter: 2,
            method: Method::GradientDescent,
            ..Default::default()
        };
        let obj = |x: &[f64]| {
            Ok((
                0.5 * (x[0] * x[0] + 1e4 * x[1] * x[1]),
                vec![x[0], 1e4 * x[1]],
            ))
        };
        match minimize_smooth(obj, &[1.0, 1.0], &s) {
            Err(Error::MaxIterExceeded { best }) => {
                assert!(!best.diagnostics.converged);
                assert!(best.diagnostics.value < best.diagnostics.initial_value);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn settings_are_validated() {
        let bad = MinimizeSettings {
            armijo_c: 1.5,
            ..Default::default()
        };
        assert!(minimize_smooth(bowl(vec![0.0]), &[1.0], &bad).is_err());
    }

    #[test]
    fn direct_solves() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(
            solve_quadratic(&id, &[1.0, 2.0, 3.0]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = solve_quadratic(&h, &[2.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            solve_quadratic(&indefinite, &[1.0, 1.0]),
            Err(Error::NotSpd)
        ));
    }

    #[test]
    fn direct_and_iterative_agree() {
        let n = 6;
        let h = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                4.0 + i as f64
            } else {
                1.0 / (1.0 + (i + j) as f64)
            }
        });
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let direct = solve_quadratic(&h, &b).unwrap();
        let hh = h.clone();
        let bb = b.clone();
        let obj = move |x: &[f64]| {
            let xv = DVector::from_column_slice(x);
            let hx = &hh * &xv;
            let bv = DVector::from_column_slice(&bb);
            Ok((
                0.5 * xv.dot(&hx) - bv.dot(&xv),
                (hx - bv).as_slice().to_vec(),
            ))
        };
        for method in [Method::Bfgs, Method::GradientDescent] {
            let m = minimize_smooth(
                obj.clone(),
                &vec![0.0; n],
                &MinimizeSettings {
                    method,
                    ..Default::default()
                },
            )
            .unwrap();
            for (a, b) in m.x.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn coupled(
            a: f64,
            b: f64,
            k: f64,
        ) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> + Clone {
            move |x: &[f64]| {
                let (u, v) = (x[0] - a, x[1] - b);
                let f = 0.25 * u.powi(4) + 0.5 * k * v * v + 0.5 * u * v + 0.5 * u * u;
                Ok((f, vec![u.powi(3) + 0.5 * v + u, k * v + 0.5 * u]))
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn descent_is_monotone_and_deterministic(a in -3.0f64..3.0, b in -3.0f64..3.0, k in 0.5f64..10.0, gd in any::<bool>()) {
                let method = if gd { Method::GradientDescent } else { Method::Bfgs };
                let settings = MinimizeSettings { method, ..Default::default() };
                let mut first = Vec::new();
                let m = minimize_observed(coupled(a, b, k), &[0.0, 0.0], &settings, |x, f| first.push((x.to_vec(), f))).unwrap();
                let mut second = Vec::new();
                minimize_observed(coupled(a, b, k), &[0.0, 0.0], &settings, |x, f| second.push((x.to_vec(), f))).unwrap();
                prop_assert_eq!(&first, &second);
                for w in first.windows(2) {
                    prop_assert!(w[1].1 <= w[0].1 + 8.0 * f64::EPSILON * w[0].1.abs().max(w[1].1.abs()));
                }
                prop_assert!(m.diagnostics.grad_norm <= 1e-10);
            }
        }
    }
}
