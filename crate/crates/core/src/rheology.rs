//! Energy and dissipation densities of the Poynting-Thomson material.
//!
//! Every density is evaluated in a reduced scalar coordinate along the
//! active strain direction `E` (`E = 1` at a material point, `E = e1 (x) e2`
//! on the shear column):
//!
//! * elastic: `W_el(I + sE) = c_e s^2 / 2 + a4 s^4 / 4`
//! * viscous: `W_vi(I + sE) = c_v s^2 / 2` for `|s| <= R`, `+inf` otherwise
//! * dissipation: `psi(rE) = d_v |r|^p / 2`
//!
//! The [`Densities`] trait lets callers plug other densities into the
//! curvature extraction and the sampled assumption checks.

use serde::Serialize;

use crate::error::{Error, Result};

/// Central second-difference step used for user-supplied densities.
pub const CURVATURE_STEP: f64 = 1e-5;
/// Maximum relative disagreement between the `h` and `h/2` curvature estimates.
pub const CURVATURE_TOL: f64 = 1e-4;

/// The three densities of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Elastic,
    Viscous,
    Dissipation,
}

impl DensityKind {
    pub const ALL: [DensityKind; 3] = [
        DensityKind::Elastic,
        DensityKind::Viscous,
        DensityKind::Dissipation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DensityKind::Elastic => "elastic",
            DensityKind::Viscous => "viscous",
            DensityKind::Dissipation => "dissipation",
        }
    }
}

/// Scalar densities along the active strain direction.
pub trait Densities {
    /// Elastic density at strain `I + sE`.
    fn w_el(&self, s: f64) -> f64;
    /// Viscous density at `I + sE`; [`Error::Rejected`] outside `K`.
    fn w_vi(&self, s: f64) -> Result<f64>;
    /// Dissipation density at rate `rE`.
    fn psi(&self, r: f64) -> f64;
    /// Homogeneity exponent of `psi`.
    fn p_psi(&self) -> f64;
    /// Constant `c3` of the lower growth bound `psi(r) >= c3 |r|^p`.
    fn psi_growth_constant(&self) -> f64;
    /// Closed-form curvatures at the identity, when known.
    fn analytic_limit(&self) -> Option<QuadraticLimit> {
        None
    }

    fn density(&self, kind: DensityKind, a: f64) -> Result<f64> {
        match kind {
            DensityKind::Elastic => Ok(self.w_el(a)),
            DensityKind::Viscous => self.w_vi(a),
            DensityKind::Dissipation => Ok(self.psi(a)),
        }
    }
}

/// Parameters of the built-in densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaterialModel {
    /// Quadratic elastic stiffness `c_e > 0`.
    pub c_e: f64,
    /// Quartic elastic coefficient `a4 >= 0`.
    pub a4: f64,
    /// Quadratic viscous stiffness `c_v > 0`.
    pub c_v: f64,
    /// Viscosity `d_v > 0`.
    pub d_v: f64,
    /// Homogeneity exponent of the dissipation, `p_psi >= 2`.
    pub p_psi: f64,
    /// Radius of the admissible viscous-strain neighborhood `K`.
    pub k_radius: f64,
}

impl Default for MaterialModel {
    fn default() -> Self {
        MaterialModel {
            c_e: 1.0,
            a4: 0.0,
            c_v: 1.0,
            d_v: 1.0,
            p_psi: 2.0,
            k_radius: 10.0,
        }
    }
}

impl MaterialModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c_e", self.c_e),
            ("c_v", self.c_v),
            ("d_v", self.d_v),
            ("k_radius", self.k_radius),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if !(self.a4.is_finite() && self.a4 >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "a4 must be nonnegative, got {}",
                self.a4
            )));
        }
        if !(self.p_psi.is_finite() && self.p_psi >= 2.0) {
            return Err(Error::InvalidInput(format!(
                "p_psi must be at least 2, got {}",
                self.p_psi
            )));
        }
        Ok(())
    }

    /// All three densities are quadratic forms, so every incremental problem is quadratic.
    pub fn is_quadratic(&self) -> bool {
        self.a4 == 0.0 && self.p_psi == 2.0
    }

    pub fn dw_el(&self, s: f64) -> f64 {
        self.c_e * s + self.a4 * s * s * s
    }

    pub fn d2w_el(&self, s: f64) -> f64 {
        self.c_e + 3.0 * self.a4 * s * s
    }

    fn check_k(&self, s: f64) -> Result<()> {
        if s.abs() <= self.k_radius {
            Ok(())
        } else {
            Err(Error::Rejected {
                value: s,
                radius: self.k_radius,
            })
        }
    }

    pub fn dw_vi(&self, s: f64) -> Result<f64> {
        self.check_k(s)?;
        Ok(self.c_v * s)
    }

    pub fn dpsi(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        0.5 * self.d_v * self.p_psi * r.abs().powf(self.p_psi - 1.0) * r.signum()
    }

    pub fn d2psi(&self, r: f64) -> f64 {
        if self.p_psi == 2.0 {
            return self.d_v;
        }
        0.5 * self.d_v * self.p_psi * (self.p_psi - 1.0) * r.abs().powf(self.p_psi - 2.0)
    }
}

impl Densities for MaterialModel {
    fn w_el(&self, s: f64) -> f64 {
        let s2 = s * s;
        0.5 * self.c_e * s2 + 0.25 * self.a4 * s2 * s2
    }

    fn w_vi(&self, s: f64) -> Result<f64> {
        self.check_k(s)?;
        Ok(0.5 * self.c_v * s * s)
    }

    fn psi(&self, r: f64) -> f64 {
        if self.p_psi == 2.0 {
            0.5 * self.d_v * r * r
        } else {
            0.5 * self.d_v * r.abs().powf(self.p_psi)
        }
    }

    fn p_psi(&self) -> f64 {
        self.p_psi
    }

    fn psi_growth_constant(&self) -> f64 {
        0.5 * self.d_v
    }

    fn analytic_limit(&self) -> Option<QuadraticLimit> {
        (self.p_psi == 2.0).then_some(QuadraticLimit {
            c_el: self.c_e,
            c_vi: self.c_v,
            d_diss: self.d_v,
        })
    }
}

/// Second derivatives of the densities at the identity (resp. zero rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticLimit {
    pub c_el: f64,
    pub c_vi: f64,
    pub d_diss: f64,
}

impl QuadraticLimit {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("c_el", self.c_el),
            ("c_vi", self.c_vi),
            ("d_diss", self.d_diss),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::DegenerateLimit(format!(
                    "{name} = {value} is not positive"
                )));
            }
        }
        Ok(())
    }

    /// Quadratic form `|a|^2_C = C a^2 / 2` of the given density.
    pub fn form(&self, kind: DensityKind, a: f64) -> f64 {
        let c = match kind {
            DensityKind::Elastic => self.c_el,
            DensityKind::Viscous => self.c_vi,
            DensityKind::Dissipation => self.d_diss,
        };
        0.5 * c * a * a
    }
}

/// `eps^-2 W(I + eps a)` (resp. `eps^-2 psi(eps a)`).
pub fn rescaled_density<D: Densities + ?Sized>(
    d: &D,
    kind: DensityKind,
    eps: f64,
    a: f64,
) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "scaling must be positive, got {eps}"
        )));
    }
    Ok(d.density(kind, eps * a)? / (eps * eps))
}

fn second_difference<D: Densities + ?Sized>(d: &D, kind: DensityKind, h: f64) -> Result<f64> {
    let center = d.density(kind, 0.0)?;
    let plus = d.density(kind, h)?;
    let minus = d.density(kind, -h)?;
    Ok((plus - 2.0 * center + minus) / (h * h))
}

fn fd_curvature<D: Densities + ?Sized>(d: &D, kind: DensityKind) -> Result<f64> {
    let coarse = second_difference(d, kind, CURVATURE_STEP)?;
    let fine = second_difference(d, kind, 0.5 * CURVATURE_STEP)?;
    let rel_diff = (coarse - fine).abs() / fine.abs().max(f64::MIN_POSITIVE);
    if !(rel_diff < CURVATURE_TOL) {
        return Err(Error::NonConvergedCurvature {
            which: kind.name(),
            rel_diff,
        });
    }
    Ok(fine)
}

/// Curvatures `C_el`, `C_vi`, `D` of the densities at the identity.
///
/// Built-in densities report their analytic values; anything else goes
/// through a cross-validated central second difference.
pub fn quadratic_limit<D: Densities + ?Sized>(d: &D) -> Result<QuadraticLimit> {
    if d.p_psi() != 2.0 {
        return Err(Error::DegenerateLimit(format!(
            "dissipation is {}-homogeneous, its curvature at zero vanishes",
            d.p_psi()
        )));
    }
    let limit = match d.analytic_limit() {
        Some(limit) => limit,
        None => QuadraticLimit {
            c_el: fd_curvature(d, DensityKind::Elastic)?,
            c_vi: fd_curvature(d, DensityKind::Viscous)?,
            d_diss: fd_curvature(d, DensityKind::Dissipation)?,
        },
    };
    limit.validate()?;
    Ok(limit)
}

/// Worst sampled margin of one assumption (positive = satisfied).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionEntry {
    pub name: &'static str,
    pub margin: f64,
}

/// Two-sided quadratic pinch `(1-delta) q <= W <= (1+delta) q` on a ball.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinchEntry {
    pub density: DensityKind,
    pub delta: f64,
    /// Largest sampled radius on which the pinch holds at every grid point.
    pub radius: f64,
    /// Worst margin `delta q - |W - q|` inside that radius.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub entries: Vec<AssumptionEntry>,
    pub pinch: Vec<PinchEntry>,
}

impl AssumptionReport {
    pub fn margin(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.margin)
    }

    pub fn pinch_radius(&self, density: DensityKind, delta: f64) -> Option<f64> {
        self.pinch
            .iter()
            .find(|p| p.density == density && p.delta == delta)
            .map(|p| p.radius)
    }

    pub fn all_hold(&self) -> bool {
        self.entries.iter().all(|e| e.margin >= 0.0) && self.pinch.iter().all(|p| p.radius > 0.0)
    }
}

pub const PINCH_DELTAS: [f64; 3] = [0.5, 0.1, 0.01];
const HOMOGENEITY_SCALES: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 3.0];
/// Relative rounding allowed when comparing `psi(lambda r)` with `lambda^p psi(r)`.
const HOMOGENEITY_SLACK: f64 = 1e-12;

/// Samples the growth, homogeneity, convexity and pinch assumptions on `grid`.
pub fn check_assumptions<D: Densities + ?Sized>(d: &D, grid: &[f64]) -> Result<AssumptionReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("assumption grid is empty".into()));
    }
    let p = d.p_psi();
    let c3 = d.psi_growth_constant();
    let mut entries = Vec::new();

    let at_identity = [
        d.w_el(0.0).abs(),
        d.w_vi(0.0).map(f64::abs).unwrap_or(f64::INFINITY),
        d.psi(0.0).abs(),
    ];
    entries.push(AssumptionEntry {
        name: "identity_normalization",
        margin: -at_identity.iter().cloned().fold(0.0, f64::max),
    });

    let el_min = grid
        .iter()
        .map(|&s| d.w_el(s))
        .fold(f64::INFINITY, f64::min);
    entries.push(AssumptionEntry {
        name: "elastic_nonnegative",
        margin: el_min,
    });

    let vi_min = grid
        .iter()
        .filter_map(|&s| d.w_vi(s).ok())
        .fold(f64::INFINITY, f64::min);
    entries.push(AssumptionEntry {
        name: "viscous_nonnegative",
        margin: vi_min,
    });

    let growth = grid
        .iter()
        .map(|&r| d.psi(r) - c3 * r.abs().powf(p))
        .fold(f64::INFINITY, f64::min);
    entries.push(AssumptionEntry {
        name: "dissipation_growth",
        margin: growth,
    });

    let mut homogeneity = 0.0_f64;
    for &r in grid {
        let base = d.psi(r);
        for &lambda in &HOMOGENEITY_SCALES {
            let expected = lambda.powf(p) * base;
            let err = (d.psi(lambda * r) - expected).abs() / (1.0 + expected.abs());
            homogeneity = homogeneity.max(err);
        }
    }
    entries.push(AssumptionEntry {
        name: "dissipation_homogeneity",
        margin: HOMOGENEITY_SLACK - homogeneity,
    });

    let mut convexity = f64::INFINITY;
    for &a in grid {
        for &b in grid {
            let mid = d.psi(0.5 * (a + b));
            let chord = 0.5 * (d.psi(a) + d.psi(b));
            convexity = convexity.min(chord - mid + 1e-14 * (1.0 + chord.abs()));
        }
    }
    entries.push(AssumptionEntry {
        name: "dissipation_convexity",
        margin: convexity,
    });

    let mut pinch = Vec::new();
    if let Ok(limit) = quadratic_limit(d) {
        let mut radii: Vec<f64> = grid.iter().map(|s| s.abs()).filter(|s| *s > 0.0).collect();
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        for kind in DensityKind::ALL {
            for &delta in &PINCH_DELTAS {
                let (radius, margin) = pinch_ball(d, &limit, kind, delta, grid, &radii);
                pinch.push(PinchEntry {
                    density: kind,
                    delta,
                    radius,
                    margin,
                });
            }
        }
    }
    Ok(AssumptionReport { entries, pinch })
}

fn pinch_margin<D: Densities + ?Sized>(
    d: &D,
    limit: &QuadraticLimit,
    kind: DensityKind,
    delta: f64,
    a: f64,
) -> Option<f64> {
    let w = d.density(kind, a).ok()?;
    let q = limit.form(kind, a);
    // rounding slack keeps exact quadratics at delta = 0 on the right side
    Some(delta * q - (w - q).abs() + 4.0 * f64::EPSILON * q)
}

fn pinch_ball<D: Densities + ?Sized>(
    d: &D,
    limit: &QuadraticLimit,
    kind: DensityKind,
    delta: f64,
    grid: &[f64],
    radii: &[f64],
) -> (f64, f64) {
    let mut radius = 0.0;
    let mut worst = f64::INFINITY;
    for &rho in radii {
        let ring: Vec<f64> = grid.iter().cloned().filter(|s| s.abs() == rho).collect();
        let ring_margin = ring
            .iter()
            .map(|&a| pinch_margin(d, limit, kind, delta, a).unwrap_or(f64::NEG_INFINITY))
            .fold(f64::INFINITY, f64::min);
        if ring_margin < 0.0 {
            break;
        }
        radius = rho;
        worst = worst.min(ring_margin);
    }
    (radius, if radius > 0.0 { worst } else { 0.0 })
}
