//! Scenario files: flat `key = value` lines grouped under optional `[section]` headers.
//!
//! Every key has a home section and may also appear before the first header.
//! Lists are comma separated. `#` starts a comment that runs to the end of the line.

use std::collections::BTreeMap;

use thiserror::Error;
use visco_pt_core::analysis::{EpsScenario, LinScenario, Scenario};
use visco_pt_core::domain::{profile_mean, Loading, Mode, Polynomial, ShearColumnMesh, State};
use visco_pt_core::linearized::{lin_equilibrium, LinProblem, LinState};
use visco_pt_core::rheology::quadratic_limit;
use visco_pt_core::{MaterialModel, Method, MinimizeSettings, Problem, TimeGrid};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("PARSE_ERROR at line {line}, key `{key}`: {message}")]
    Parse {
        line: usize,
        key: String,
        message: String,
    },
    #[error("VALIDATION_ERROR: {0}")]
    Validation(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

/// `(section, key)` of every accepted entry.
const KEYS: &[(&str, &str)] = &[
    ("", "mode"),
    ("", "seed"),
    ("", "eps"),
    ("model", "c_e"),
    ("model", "a4"),
    ("model", "c_v"),
    ("model", "d_v"),
    ("model", "p_psi"),
    ("model", "k_radius"),
    ("mesh", "n_elements"),
    ("grid", "T"),
    ("grid", "N"),
    ("loading", "f"),
    ("loading", "g"),
    ("initial", "F0"),
    ("initial", "F_vi0"),
    ("initial", "gamma0"),
    ("initial", "beta0"),
    ("initial", "u0"),
    ("initial", "v0"),
    ("solver", "method"),
    ("solver", "grad_tol"),
    ("solver", "max_iter"),
    ("solver", "armijo_c"),
    ("solver", "backtrack_factor"),
    ("checks", "energy"),
    ("checks", "sharp"),
    ("checks", "sharp_m"),
    ("checks", "semistability"),
    ("checks", "probes"),
    ("checks", "amplitudes"),
    ("checks", "probe_every"),
    ("checks", "monotonicity"),
    ("checks", "monotonicity_tau_list"),
    ("checks", "convergence"),
    ("checks", "tau_list"),
    ("checks", "linearized"),
    ("checks", "epsilon"),
    ("checks", "eps_list"),
    ("checks", "fine_tau"),
    ("checks", "density"),
    ("checks", "density_radius"),
    ("checks", "density_points"),
];

/// Which verification checks `verify` runs and their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSelection {
    pub energy: bool,
    pub sharp: bool,
    pub sharp_m: usize,
    pub semistability: bool,
    pub probes: usize,
    pub amplitudes: Vec<f64>,
    pub probe_every: usize,
    pub monotonicity: bool,
    pub monotonicity_tau_list: Vec<f64>,
    pub convergence: bool,
    pub tau_list: Vec<f64>,
    pub linearized: bool,
    pub epsilon: bool,
    pub eps_list: Vec<f64>,
    pub fine_tau: f64,
    pub density: bool,
    pub density_radius: f64,
    pub density_points: usize,
}

impl Default for CheckSelection {
    fn default() -> Self {
        CheckSelection {
            energy: true,
            sharp: true,
            sharp_m: 16,
            semistability: true,
            probes: 20,
            amplitudes: vec![1e-2, 1e-1],
            probe_every: 10,
            monotonicity: true,
            monotonicity_tau_list: vec![0.1, 0.2, 0.5, 1.0],
            convergence: false,
            tau_list: vec![0.1, 0.05, 0.025, 0.0125],
            linearized: false,
            epsilon: false,
            eps_list: vec![0.2, 0.1, 0.05],
            fine_tau: 1e-3,
            density: false,
            density_radius: 1.0,
            density_points: 201,
        }
    }
}

/// Initial data exactly as written; resolved against the mode on use.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InitialData {
    pub f0: Option<f64>,
    pub f_vi0: Option<f64>,
    pub gamma0: Option<Vec<f64>>,
    pub beta0: Option<Vec<f64>>,
    pub u0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub model: MaterialModel,
    pub n_elements: usize,
    pub t_final: f64,
    pub n_steps: usize,
    pub loading: Loading,
    pub initial: InitialData,
    /// Runs `id + eps (u0, v0)` under `eps`-scaled loading when set.
    pub eps: Option<f64>,
    pub settings: MinimizeSettings,
    pub checks: CheckSelection,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            mode: Mode::MaterialPoint,
            model: MaterialModel::default(),
            n_elements: 8,
            t_final: 1.0,
            n_steps: 100,
            loading: Loading::zero(),
            initial: InitialData::default(),
            eps: None,
            settings: MinimizeSettings::default(),
            checks: CheckSelection::default(),
            seed: 0,
        }
    }
}

struct Entry {
    line: usize,
    value: String,
}

fn parse_err(line: usize, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn number(key: &str, e: &Entry) -> Result<f64> {
    e.value
        .parse::<f64>()
        .map_err(|_| parse_err(e.line, key, format!("`{}` is not a number", e.value)))
}

fn integer<T: std::str::FromStr>(key: &str, e: &Entry) -> Result<T> {
    e.value.parse::<T>().map_err(|_| {
        parse_err(
            e.line,
            key,
            format!("`{}` is not a nonnegative integer", e.value),
        )
    })
}

fn list(key: &str, e: &Entry) -> Result<Vec<f64>> {
    parse_list(&e.value).map_err(|m| parse_err(e.line, key, m))
}

fn boolean(key: &str, e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(parse_err(
            e.line,
            key,
            format!("`{other}` is not a boolean"),
        )),
    }
}

/// Comma-separated floats.
pub fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{}` is not a number", s.trim()))
        })
        .collect()
}

fn validation(msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(validation(format!("{name} must be positive, got {v}")))
    }
}

fn positive_list(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(validation(format!("{name} must not be empty")));
    }
    v.iter().try_for_each(|&x| positive(name, x))
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut entries: BTreeMap<&'static str, Entry> = BTreeMap::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.split('#').next().unwrap_or("").trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line, trimmed, "unterminated section header"))?
                .trim();
            if !KEYS.iter().any(|(s, _)| *s == name) || name.is_empty() {
                return Err(parse_err(line, name, "unknown section"));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| parse_err(line, trimmed, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        let Some(&(home, known)) = KEYS.iter().find(|(_, k)| *k == key) else {
            return Err(parse_err(line, key, "unknown key"));
        };
        if !section.is_empty() && section != home {
            return Err(parse_err(
                line,
                key,
                format!("key belongs in [{home}], found in [{section}]"),
            ));
        }
        if value.is_empty() {
            return Err(parse_err(line, key, "missing value"));
        }
        if entries
            .insert(
                known,
                Entry {
                    line,
                    value: value.to_string(),
                },
            )
            .is_some()
        {
            return Err(parse_err(line, key, "duplicate key"));
        }
    }
    build(&entries)
}

fn build(entries: &BTreeMap<&'static str, Entry>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::default();
    for (&key, e) in entries {
        match key {
            "mode" => {
                cfg.mode = match e.value.as_str() {
                    "mp" | "material_point" => Mode::MaterialPoint,
                    "shear" | "shear_column" => Mode::ShearColumn,
                    other => return Err(parse_err(e.line, key, format!("unknown mode `{other}`"))),
                }
            }
            "seed" => cfg.seed = integer(key, e)?,
            "eps" => cfg.eps = Some(number(key, e)?),
            "c_e" => cfg.model.c_e = number(key, e)?,
            "a4" => cfg.model.a4 = number(key, e)?,
            "c_v" => cfg.model.c_v = number(key, e)?,
            "d_v" => cfg.model.d_v = number(key, e)?,
            "p_psi" => cfg.model.p_psi = number(key, e)?,
            "k_radius" => cfg.model.k_radius = number(key, e)?,
            "n_elements" => cfg.n_elements = integer(key, e)?,
            "T" => cfg.t_final = number(key, e)?,
            "N" => cfg.n_steps = integer(key, e)?,
            "f" => cfg.loading.f = Polynomial(list(key, e)?),
            "g" => cfg.loading.g = Polynomial(list(key, e)?),
            "F0" => cfg.initial.f0 = Some(number(key, e)?),
            "F_vi0" => cfg.initial.f_vi0 = Some(number(key, e)?),
            "gamma0" => cfg.initial.gamma0 = Some(list(key, e)?),
            "beta0" => cfg.initial.beta0 = Some(list(key, e)?),
            "u0" => cfg.initial.u0 = Some(list(key, e)?),
            "v0" => cfg.initial.v0 = Some(list(key, e)?),
            "method" => {
                cfg.settings.method = match e.value.as_str() {
                    "bfgs" => Method::Bfgs,
                    "gd" | "gradient_descent" => Method::GradientDescent,
                    other => {
                        return Err(parse_err(e.line, key, format!("unknown method `{other}`")))
                    }
                }
            }
            "grad_tol" => cfg.settings.grad_tol = number(key, e)?,
            "max_iter" => cfg.settings.max_iter = integer(key, e)?,
            "armijo_c" => cfg.settings.armijo_c = number(key, e)?,
            "backtrack_factor" => cfg.settings.backtrack_factor = number(key, e)?,
            "energy" => cfg.checks.energy = boolean(key, e)?,
            "sharp" => cfg.checks.sharp = boolean(key, e)?,
            "sharp_m" => cfg.checks.sharp_m = integer(key, e)?,
            "semistability" => cfg.checks.semistability = boolean(key, e)?,
            "probes" => cfg.checks.probes = integer(key, e)?,
            "amplitudes" => cfg.checks.amplitudes = list(key, e)?,
            "probe_every" => cfg.checks.probe_every = integer(key, e)?,
            "monotonicity" => cfg.checks.monotonicity = boolean(key, e)?,
            "monotonicity_tau_list" => cfg.checks.monotonicity_tau_list = list(key, e)?,
            "convergence" => cfg.checks.convergence = boolean(key, e)?,
            "tau_list" => cfg.checks.tau_list = list(key, e)?,
            "linearized" => cfg.checks.linearized = boolean(key, e)?,
            "epsilon" => cfg.checks.epsilon = boolean(key, e)?,
            "eps_list" => cfg.checks.eps_list = list(key, e)?,
            "fine_tau" => cfg.checks.fine_tau = number(key, e)?,
            "density" => cfg.checks.density = boolean(key, e)?,
            "density_radius" => cfg.checks.density_radius = number(key, e)?,
            "density_points" => cfg.checks.density_points = integer(key, e)?,
            _ => unreachable!("key table and builder disagree on `{key}`"),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.model
            .validate()
            .map_err(|e| validation(e.to_string()))?;
        self.settings
            .validate()
            .map_err(|e| validation(e.to_string()))?;
        positive("T", self.t_final)?;
        if self.n_steps == 0 {
            return Err(validation("N must be at least 1"));
        }
        if self.n_elements == 0 {
            return Err(validation("n_elements must be at least 1"));
        }
        if let Some(eps) = self.eps {
            positive("eps", eps)?;
            let i = &self.initial;
            if i.f0.is_some() || i.f_vi0.is_some() || i.gamma0.is_some() || i.beta0.is_some() {
                return Err(validation(
                    "with eps set, initial data is given by u0 and v0 only",
                ));
            }
        }
        let c = &self.checks;
        if c.sharp_m < 2 || !c.sharp_m.is_multiple_of(2) {
            return Err(validation(format!(
                "sharp_m must be even and >= 2, got {}",
                c.sharp_m
            )));
        }
        if c.probe_every == 0 {
            return Err(validation("probe_every must be at least 1"));
        }
        if c.density_points < 2 {
            return Err(validation("density_points must be at least 2"));
        }
        positive_list("tau_list", &c.tau_list)?;
        positive_list("monotonicity_tau_list", &c.monotonicity_tau_list)?;
        if c.monotonicity_tau_list.windows(2).any(|w| w[1] < w[0]) {
            return Err(validation("monotonicity_tau_list must be ascending"));
        }
        positive_list("eps_list", &c.eps_list)?;
        positive("fine_tau", c.fine_tau)?;
        positive("density_radius", c.density_radius)?;
        if c.amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(validation("amplitudes must be finite"));
        }
        self.initial_state()?;
        self.lin_initial_raw()?;
        Ok(())
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.t_final, self.n_steps).expect("validated grid")
    }

    pub fn mesh(&self) -> ShearColumnMesh {
        ShearColumnMesh::new(self.n_elements).expect("validated mesh")
    }

    pub fn problem(&self) -> Problem {
        let loading = match self.eps {
            Some(eps) => self.loading.scaled(eps),
            None => self.loading.clone(),
        };
        Problem {
            model: self.model,
            loading,
            settings: self.settings,
        }
    }

    fn nodal(&self, name: &str, values: &Option<Vec<f64>>) -> Result<Vec<f64>> {
        let n = self.n_elements + 1;
        match values {
            None => Ok(vec![0.0; n]),
            Some(v) if v.len() == n => Ok(v.clone()),
            Some(v) => Err(validation(format!(
                "{name} needs {n} nodal values, got {}",
                v.len()
            ))),
        }
    }

    fn scalar(&self, name: &str, values: &Option<Vec<f64>>) -> Result<Option<f64>> {
        match values {
            None => Ok(None),
            Some(v) if v.len() == 1 => Ok(Some(v[0])),
            Some(v) => Err(validation(format!(
                "{name} takes one value in material-point mode, got {}",
                v.len()
            ))),
        }
    }

    /// Initial finite-strain state.
    pub fn initial_state(&self) -> Result<State> {
        if let Some(eps) = self.eps {
            return Ok(self.lin_initial()?.embed(eps));
        }
        let i = &self.initial;
        let state = match self.mode {
            Mode::MaterialPoint => {
                if i.gamma0.is_some() || i.beta0.is_some() {
                    return Err(validation("gamma0 and beta0 are shear-column keys"));
                }
                let f_vi = i.f_vi0.unwrap_or(1.0);
                State::material_point(i.f0.unwrap_or(f_vi), f_vi)
            }
            Mode::ShearColumn => {
                if i.f0.is_some() || i.f_vi0.is_some() {
                    return Err(validation("F0 and F_vi0 are material-point keys"));
                }
                let gamma = self.nodal("gamma0", &i.gamma0)?;
                if gamma[0] != 0.0 {
                    return Err(validation("gamma0 must vanish at the clamped node"));
                }
                let mut beta = self.nodal("beta0", &i.beta0)?;
                let mean = profile_mean(&beta);
                beta.iter_mut().for_each(|b| *b -= mean);
                State::ShearColumn { gamma, beta }
            }
        };
        state.validate().map_err(|e| validation(e.to_string()))?;
        Ok(state)
    }

    fn lin_initial_raw(&self) -> Result<(LinState, bool)> {
        let i = &self.initial;
        match self.mode {
            Mode::MaterialPoint => {
                let v = self.scalar("v0", &i.v0)?.unwrap_or(0.0);
                let u = self.scalar("u0", &i.u0)?;
                Ok((
                    LinState::MaterialPoint {
                        u: u.unwrap_or(0.0),
                        v,
                    },
                    u.is_none(),
                ))
            }
            Mode::ShearColumn => {
                let u = self.nodal("u0", &i.u0)?;
                if u[0] != 0.0 {
                    return Err(validation("u0 must vanish at the clamped node"));
                }
                let mut v = self.nodal("v0", &i.v0)?;
                let mean = profile_mean(&v);
                v.iter_mut().for_each(|x| *x -= mean);
                Ok((LinState::ShearColumn { u, v }, i.u0.is_none()))
            }
        }
    }

    pub fn lin_problem(&self) -> Result<LinProblem> {
        let quad = quadratic_limit(&self.model).map_err(|e| validation(e.to_string()))?;
        Ok(LinProblem {
            quad,
            loading: self.loading.clone(),
        })
    }

    /// `(u0, v0)`; a missing `u0` is the elastic equilibrium of `v0` under the limit load.
    pub fn lin_initial(&self) -> Result<LinState> {
        let (state, derive_u) = self.lin_initial_raw()?;
        if !derive_u {
            return Ok(state);
        }
        let problem = self.lin_problem()?;
        lin_equilibrium(0.0, &state, &problem).map_err(|e| validation(e.to_string()))
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Ok(Scenario {
            problem: self.problem(),
            initial: self.initial_state()?,
            t_final: self.t_final,
        })
    }

    pub fn lin_scenario(&self) -> Result<LinScenario> {
        Ok(LinScenario {
            problem: self.lin_problem()?,
            initial: self.lin_initial()?,
            t_final: self.t_final,
        })
    }

    pub fn eps_scenario(&self) -> Result<EpsScenario> {
        let problem = Problem {
            model: self.model,
            loading: self.loading.clone(),
            settings: self.settings,
        };
        Ok(EpsScenario {
            problem,
            initial: self.lin_initial()?,
            t_final: self.t_final,
        })
    }

    /// Symmetric probe grid `[-r, r]` for the density study.
    pub fn density_grid(&self) -> Vec<f64> {
        let n = self.checks.density_points - 1;
        let r = self.checks.density_radius;
        (0..=n)
            .map(|k| -r + 2.0 * r * k as f64 / n as f64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scalar_config() {
        let cfg = parse_config("mode = mp\nT = 3\nN = 300\nF_vi0 = 1.5\n").unwrap();
        assert_eq!(cfg.mode, Mode::MaterialPoint);
        assert_eq!(
            (cfg.model.c_e, cfg.model.c_v, cfg.model.d_v, cfg.model.p_psi),
            (1.0, 1.0, 1.0, 2.0)
        );
        assert_eq!(
            cfg.initial_state().unwrap(),
            State::material_point(1.5, 1.5)
        );
        assert!((cfg.grid().tau() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn sections_and_comments() {
        let text = "# scenario\nmode = shear # trailing\n[model]\na4 = 1\n[mesh]\nn_elements = 4\n[loading]\ng = 0.5, 0.1\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.model.a4, 1.0);
        assert_eq!(cfg.loading.g, Polynomial(vec![0.5, 0.1]));
        assert_eq!(
            cfg.initial_state().unwrap(),
            ShearColumnMesh::new(4).unwrap().rest()
        );
    }

    #[test]
    fn parse_errors_name_key_and_line() {
        match parse_config("mode = mp\ntua = 0.1\n") {
            Err(ConfigError::Parse { line, key, .. }) => {
                assert_eq!((line, key.as_str()), (2, "tua"))
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_config("[model]\nT = 1\n"),
            Err(ConfigError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_config("T = 1\nT = 2\n"),
            Err(ConfigError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_config("T = x\n"),
            Err(ConfigError::Parse { .. })
        ));
        assert!(matches!(
            parse_config("[nope]\n"),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            parse_config("N = 0\n"),
            Err(ConfigError::Validation(_))
        ));
        assert!(matches!(
            parse_config("T = -1\n"),
            Err(ConfigError::Validation(_))
        ));
        assert!(matches!(
            parse_config("c_e = 0\n"),
            Err(ConfigError::Validation(_))
        ));
        assert!(matches!(
            parse_config("mode = shear\nn_elements = 2\ngamma0 = 0, 1\n"),
            Err(ConfigError::Validation(_))
        ));
        assert!(matches!(
            parse_config("eps = 0.1\nF_vi0 = 1.2\n"),
            Err(ConfigError::Validation(_))
        ));
    }

    #[test]
    fn eps_scaled_initial_data() {
        let cfg = parse_config("eps = 0.1\nv0 = 0.5\n").unwrap();
        let State::MaterialPoint { f, f_vi } = cfg.initial_state().unwrap() else {
            unreachable!()
        };
        assert!((f_vi - 1.05).abs() < 1e-15);
        assert!((f - 1.05).abs() < 1e-15);
    }
}
