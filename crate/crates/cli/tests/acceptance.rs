//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use visco_pt_core::analysis::{
    check_energy_inequality, check_monotonicity, check_semistability, density_convergence,
    epsilon_study, ode_oracle, probe_directions, tau_convergence, ConvergenceScenario,
    EnergyFactor, EpsPoint, EpsScenario, Scenario, VerificationReport,
};
use visco_pt_core::domain::{dissipation_increment_with_grad, total_energy};
use visco_pt_core::linearized::{
    lin_equilibrium, lin_step, lin_step_residual, mp_lin_closed_form, run_linearized,
};
use visco_pt_core::rheology::quadratic_limit;
use visco_pt_core::stepper::{incremental_step, run_evolution};
use visco_pt_core::{
    LinProblem, LinState, Loading, MaterialModel, Polynomial, Problem, ShearColumnMesh, State,
    TimeGrid, Trajectory,
};

type Outcome = Result<String, String>;
type Objective<'a> = dyn Fn(&[f64]) -> Result<(f64, Vec<f64>), String> + 'a;
type Criterion = (&'static str, fn() -> Outcome);

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn ensure(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    format!("runtime error: {err}")
}

fn quartic() -> MaterialModel {
    MaterialModel {
        a4: 1.0,
        ..MaterialModel::default()
    }
}

fn fig2_problem() -> Problem {
    Problem::new(MaterialModel::default(), Loading::zero())
}

fn shear_loading() -> Loading {
    Loading {
        f: Polynomial(vec![0.2]),
        g: Polynomial(vec![0.5, 0.1]),
    }
}

fn shear_initial(mesh: &ShearColumnMesh) -> State {
    mesh.sample(|x| 0.1 * x, |x| 0.2 * (std::f64::consts::PI * x).sin())
}

/// Scenarios shared by the energy and semistability criteria.
fn scenarios() -> Vec<(&'static str, Problem, State)> {
    let mesh = ShearColumnMesh::new(8).expect("mesh");
    let mp_load = Loading {
        f: Polynomial::default(),
        g: Polynomial(vec![0.3, 0.2]),
    };
    vec![
        (
            "scalar zero load",
            fig2_problem(),
            State::material_point(1.5, 1.5),
        ),
        (
            "scalar loaded",
            Problem::new(MaterialModel::default(), mp_load),
            State::material_point(1.2, 1.4),
        ),
        (
            "shear quadratic",
            Problem::new(MaterialModel::default(), shear_loading()),
            shear_initial(&mesh),
        ),
        (
            "shear quartic",
            Problem::new(quartic(), shear_loading()),
            shear_initial(&mesh),
        ),
    ]
}

fn run_all(grid: TimeGrid) -> Result<Vec<(&'static str, Problem, Trajectory)>, String> {
    scenarios()
        .into_iter()
        .map(|(name, p, s)| run_evolution(&s, grid, &p).map(|t| (name, p, t)).map_err(e))
        .collect()
}

fn worst(report: &VerificationReport) -> f64 {
    report.min_residual().unwrap_or(f64::NAN)
}

fn c1_fig2() -> Outcome {
    let problem = fig2_problem();
    let grid = TimeGrid::with_step(3.0, 1e-3).map_err(e)?;
    let ((traj, oracle), elapsed) = timed(|| {
        (
            run_evolution(&State::material_point(1.5, 1.5), grid, &problem),
            ode_oracle(1.5, 1.0, grid),
        )
    });
    let traj = traj.map_err(e)?;
    let oracle = oracle.map_err(e)?;
    let f_vi: Vec<f64> = traj
        .states
        .iter()
        .map(|s| s.viscous_strain()[0] + 1.0)
        .collect();
    let decreasing = f_vi.windows(2).all(|w| w[1] < w[0]);
    let last = *f_vi.last().expect("nonempty");
    let err = f_vi
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let ok =
        decreasing && last > 1.0 && last < 1.1 && err <= 5e-3 && elapsed < Duration::from_secs(1);
    ensure(
        ok,
        format!(
            "strictly decreasing={decreasing}, F_vi(3)={last:.6}, sup error vs RK4={err:.3e} (<= 5e-3), {:.3}s (< 1s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_closed_form() -> Outcome {
    let problem = fig2_problem();
    let (result, elapsed) = timed(|| -> Result<f64, String> {
        let mut worst: f64 = 0.0;
        for tau in [0.5, 0.1, 0.01] {
            for f in [0.5, 1.0, 1.5, 2.0] {
                let (next, _) = incremental_step(tau, &State::material_point(f, f), tau, &problem)
                    .map_err(e)?;
                let expected = (tau * f * f + f) / (tau * f * f + 1.0);
                let State::MaterialPoint { f: fe, f_vi } = next else {
                    unreachable!()
                };
                worst = worst
                    .max((f_vi - expected).abs())
                    .max((fe - expected).abs());
            }
        }
        Ok(worst)
    });
    let worst = result?;
    ensure(
        worst <= 1e-9 && elapsed < Duration::from_secs(1),
        format!(
            "max deviation {worst:.3e} (<= 1e-9), {:.3}s (< 1s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn c3_tau_order() -> Outcome {
    let scenario = Scenario {
        problem: fig2_problem(),
        initial: State::material_point(1.5, 1.5),
        t_final: 3.0,
    };
    let (report, elapsed) = timed(|| {
        tau_convergence(
            ConvergenceScenario::OdeRk4(&scenario),
            &[0.1, 0.05, 0.025, 0.0125],
        )
    });
    let report = report.map_err(e)?;
    let order = report.rates.get("order").copied().unwrap_or(f64::NAN);
    ensure(
        (0.9..=1.3).contains(&order) && elapsed < Duration::from_secs(10),
        format!(
            "fitted order {order:.4} (in [0.9, 1.3]), {:.3}s (< 10s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn c4_energy_inequality() -> Outcome {
    let runs = run_all(TimeGrid::new(1.0, 100).map_err(e)?)?;
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, problem, traj) in &runs {
        let report = check_energy_inequality(traj, problem, EnergyFactor::One).map_err(e)?;
        let w = worst(&report);
        ok &= w >= -1e-8;
        parts.push(format!("{name}: {w:.2e}"));
    }
    ensure(ok, format!("min residual (>= -1e-8) {}", parts.join(", ")))
}

fn c5_sharp_identity() -> Outcome {
    let problem = fig2_problem();
    let traj = run_evolution(
        &State::material_point(1.5, 1.5),
        TimeGrid::new(3.0, 30).map_err(e)?,
        &problem,
    )
    .map_err(e)?;
    let final_residual = |m: usize| -> Result<(f64, f64, String), String> {
        let r = check_energy_inequality(&traj, &problem, EnergyFactor::PPsi { m }).map_err(e)?;
        let fin = r.params["final_residual"].as_f64().unwrap_or(f64::NAN);
        let e0 = r.params["initial_energy"].as_f64().unwrap_or(f64::NAN);
        Ok((fin, e0, r.params["mode"].as_str().unwrap_or("").to_string()))
    };
    let (r16, e0, mode) = final_residual(16)?;
    let (r32, _, _) = final_residual(32)?;
    let shrink = r16.abs() / r32.abs().max(f64::MIN_POSITIVE);
    ensure(
        mode == "equality" && r16.abs() <= 1e-3 * e0.abs() && shrink >= 3.0,
        format!(
            "{mode}: |final residual| at m=16 {:.3e} (<= {:.3e}), shrink to m=32 x{shrink:.2} (>= 3)",
            r16.abs(),
            1e-3 * e0.abs()
        ),
    )
}

fn c6_monotonicity() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, problem, initial) in scenarios() {
        let report =
            check_monotonicity(&initial, 0.0, &[0.1, 0.2, 0.5, 1.0], &problem).map_err(e)?;
        ok &= report.pass;
        parts.push(format!("{name}: {:.2e}", worst(&report)));
    }
    ensure(ok, format!("min increment (>= -1e-9) {}", parts.join(", ")))
}

fn c7_semistability() -> Outcome {
    let grid = TimeGrid::new(1.0, 100).map_err(e)?;
    let runs = run_all(grid)?;
    let indices: Vec<usize> = (10..=grid.n_steps).step_by(10).collect();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, problem, traj) in &runs {
        let report =
            check_semistability(traj, &indices, problem, 20, &[1e-2, 1e-1], 7).map_err(e)?;
        let w = worst(&report);
        ok &= w >= -1e-8 && report.residuals.len() == indices.len() * 40;
        parts.push(format!("{name}: {w:.2e}"));
    }
    ensure(
        ok,
        format!("min energy gain (>= -1e-8) {}", parts.join(", ")),
    )
}

fn c8_linearized() -> Outcome {
    let quad = quadratic_limit(&MaterialModel::default()).map_err(e)?;
    let mp = LinProblem {
        quad,
        loading: Loading::zero(),
    };
    let grid = TimeGrid::with_step(3.0, 1e-3).map_err(e)?;
    let traj = run_linearized(&LinState::MaterialPoint { u: 0.5, v: 0.5 }, grid, &mp).map_err(e)?;
    let mp_err = traj
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (u, v) = mp_lin_closed_form(0.5, &quad, grid.time(i));
            (s.displacement()[0] - u)
                .abs()
                .max((s.viscous()[0] - v).abs())
        })
        .fold(0.0, f64::max);

    let mesh = ShearColumnMesh::new(8).map_err(e)?;
    let shear = LinProblem {
        quad,
        loading: shear_loading(),
    };
    let mut prev = LinState::shear(
        &mesh,
        |x| 0.1 * x,
        |x| 0.2 * (std::f64::consts::PI * x).sin(),
    );
    let mut el_residual: f64 = 0.0;
    let tau = 0.01;
    for i in 1..=20 {
        let t = i as f64 * tau;
        let next = lin_step(t, &prev, tau, &shear).map_err(e)?;
        el_residual = el_residual.max(lin_step_residual(t, &prev, &next, tau, &shear));
        prev = next;
    }
    ensure(
        mp_err <= 2e-3 && el_residual <= 1e-10,
        format!("scalar sup error {mp_err:.3e} (<= 2e-3), shear Euler-Lagrange residual {el_residual:.3e} (<= 1e-10)"),
    )
}

fn eps_study(scenario: &EpsScenario) -> Result<(VerificationReport, Vec<EpsPoint>), String> {
    let report = epsilon_study(scenario, &[0.2, 0.1, 0.05], 1e-3).map_err(e)?;
    let points = points_from_objects(&report.params["points"])?;
    Ok((report, points))
}

/// Relaxing material point; the multiplicative split couples `v` to the elastic law.
fn mp_eps_scenario(model: MaterialModel) -> EpsScenario {
    EpsScenario {
        problem: Problem::new(model, Loading::zero()),
        initial: LinState::MaterialPoint { u: 0.5, v: 0.5 },
        t_final: 1.0,
    }
}

/// Loaded shear column starting in equilibrium.
fn shear_eps_scenario(model: MaterialModel) -> Result<EpsScenario, String> {
    let mesh = ShearColumnMesh::new(8).map_err(e)?;
    let loading = Loading {
        f: Polynomial::default(),
        g: Polynomial(vec![1.0]),
    };
    let lin_problem = LinProblem {
        quad: quadratic_limit(&model).map_err(e)?,
        loading: loading.clone(),
    };
    let initial =
        lin_equilibrium(0.0, &LinState::shear(&mesh, |_| 0.0, |_| 0.0), &lin_problem).map_err(e)?;
    Ok(EpsScenario {
        problem: Problem::new(model, loading),
        initial,
        t_final: 1.0,
    })
}

fn points_from_objects(v: &serde_json::Value) -> Result<Vec<EpsPoint>, String> {
    let arr = v.as_array().ok_or("points are not an array")?;
    arr.iter()
        .map(|p| {
            let get = |k: &str| p[k].as_f64().ok_or(format!("point lacks {k}"));
            Ok(EpsPoint {
                eps: get("eps")?,
                u_error: get("u_error")?,
                v_error: get("v_error")?,
                gap_initial: get("gap_initial")?,
                gap_final: get("gap_final")?,
            })
        })
        .collect()
}

fn c9_epsilon() -> Outcome {
    let ((quartic_run, quadratic_run), elapsed) = timed(|| {
        (
            eps_study(&mp_eps_scenario(quartic())),
            shear_eps_scenario(MaterialModel::default()).and_then(|s| eps_study(&s)),
        )
    });
    let (report, points) = quartic_run?;
    let (_, quad_points) = quadratic_run?;
    let v: Vec<f64> = points.iter().map(|p| p.v_error).collect();
    let decreasing = v.windows(2).all(|w| w[1] < w[0]);
    let rate = report.rates.get("v_error").copied().unwrap_or(f64::NAN);
    let quad_gap = quad_points
        .iter()
        .map(|p| p.gap_initial.max(p.gap_final).max(p.u_error).max(p.v_error))
        .fold(0.0, f64::max);
    ensure(
        decreasing && rate >= 0.8 && quad_gap <= 1e-7 && elapsed < Duration::from_secs(30),
        format!(
            "v errors {:?} decreasing={decreasing}, rate {rate:.3} (>= 0.8), quadratic gaps {quad_gap:.2e} (<= 1e-7), {:.2}s (< 30s)",
            v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    )
}

fn c10_densities() -> Outcome {
    let probe: Vec<f64> = (0..=200).map(|k| -1.0 + k as f64 / 100.0).collect();
    let eps_list = [0.1, 0.05];
    let report = density_convergence(&quartic(), &eps_list, &probe).map_err(e)?;
    let gaps: Vec<f64> = report.params["max_gaps"]
        .as_array()
        .ok_or("no gaps")?
        .iter()
        .map(|g| g.as_f64().unwrap_or(f64::NAN))
        .collect();
    let deviation = gaps
        .iter()
        .zip(eps_list)
        .map(|(g, eps)| (g - eps * eps / 4.0).abs())
        .fold(0.0, f64::max);
    let rate = report.rates.values().copied().fold(f64::INFINITY, f64::min);
    ensure(
        deviation <= 1e-12 && rate >= 1.9,
        format!("sup gaps {:?}, deviation from eps^2/4 {deviation:.2e} (<= 1e-12), rate {rate:.4} (>= 1.9)", gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>()),
    )
}

/// Largest `|g - g_fd|_inf / max(|g|_inf, 1e-8)` of a gradient against central differences.
fn fd_error(f: &Objective<'_>, x: &[f64]) -> Result<f64, String> {
    let (_, g) = f(x)?;
    let h = 1e-6;
    let mut err: f64 = 0.0;
    for k in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let fd = (f(&xp)?.0 - f(&xm)?.0) / (2.0 * h);
        err = err.max((fd - g[k]).abs());
    }
    let scale = g.iter().fold(0.0, |m: f64, v| m.max(v.abs())).max(1e-8);
    Ok(err / scale)
}

fn c11_gradients() -> Outcome {
    let model = quartic();
    let mp_load = Loading {
        f: Polynomial::default(),
        g: Polynomial(vec![0.3, 0.2]),
    };
    let mesh = ShearColumnMesh::new(6).map_err(e)?;
    let n = mesh.n_nodes();
    let mut worst_mp: f64 = 0.0;
    let mut worst_shear: f64 = 0.0;
    let draws = probe_directions(4, 100, 11);
    for d in &draws {
        let old = State::material_point(1.0 + 0.3 * d[0], 1.0 + 0.3 * d[1]);
        let x = [1.0 + 0.3 * d[2], 1.0 + 0.3 * d[3]];
        let objective = |y: &[f64]| -> Result<(f64, Vec<f64>), String> {
            let s = State::material_point(y[0], y[1]);
            let (en, ge) = total_energy(0.5, &s, &model, &mp_load).map_err(e)?;
            let (di, gd) = dissipation_increment_with_grad(&old, &s, 0.1, &model);
            Ok((en + di, ge.iter().zip(&gd).map(|(a, b)| a + b).collect()))
        };
        worst_mp = worst_mp.max(fd_error(&objective, &x)?);
    }
    let draws = probe_directions(4 * n, 100, 12);
    let loading = shear_loading();
    for d in &draws {
        let scaled: Vec<f64> = d.iter().map(|v| 0.5 * v).collect();
        let mut old_dofs = scaled[..2 * n].to_vec();
        let mut x = scaled[2 * n..].to_vec();
        old_dofs[0] = 0.0;
        x[0] = 0.0;
        let old = mesh.rest().with_dofs(&old_dofs);
        let template = mesh.rest();
        let objective = |y: &[f64]| -> Result<(f64, Vec<f64>), String> {
            let s = template.with_dofs(y);
            let (en, ge) = total_energy(0.5, &s, &model, &loading).map_err(e)?;
            let (di, gd) = dissipation_increment_with_grad(&old, &s, 0.1, &model);
            // the clamped bottom node is not a free degree of freedom
            let mut g: Vec<f64> = ge.iter().zip(&gd).map(|(a, b)| a + b).collect();
            g[0] = 0.0;
            Ok((en + di, g))
        };
        let err = fd_error(
            &|y: &[f64]| {
                let mut y = y.to_vec();
                y[0] = 0.0;
                objective(&y)
            },
            &x,
        )?;
        worst_shear = worst_shear.max(err);
    }
    ensure(
        worst_mp < 1e-6 && worst_shear < 1e-6,
        format!("max relative error scalar {worst_mp:.2e}, shear {worst_shear:.2e} (< 1e-6), 100 states each"),
    )
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let cfg = dir.path().join("scenario.cfg");
    std::fs::write(&cfg, "mode = shear\nseed = 3\n[model]\na4 = 1\n[grid]\nT = 0.5\nN = 20\n[loading]\ng = 0.5, 0.1\n")
        .map_err(e)?;
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_visco-pt"))
            .arg("verify")
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(e)?;
        if !status.success() {
            return Err(format!("verify exited with {status}"));
        }
        outputs.push(std::fs::read(out.join("verify.json")).map_err(e)?);
    }
    ensure(
        outputs[0] == outputs[1] && !outputs[0].is_empty(),
        format!(
            "two verify runs wrote {} and {} identical bytes",
            outputs[0].len(),
            outputs[1].len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("figure-2 relaxation", c1_fig2),
        ("closed-form scalar step", c2_closed_form),
        ("time-step order", c3_tau_order),
        ("energy inequality", c4_energy_inequality),
        ("sharp energy identity", c5_sharp_identity),
        ("dissipation monotonicity", c6_monotonicity),
        ("semistability", c7_semistability),
        ("linearized solver", c8_linearized),
        ("small-strain limit", c9_epsilon),
        ("density rescaling", c10_densities),
        ("gradient consistency", c11_gradients),
        ("deterministic verify output", c12_determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(msg) => println!("PASS [{:>2}] {name}: {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {msg}", k + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
